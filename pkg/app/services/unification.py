"""
unification service
"""
import logging
from typing import Dict

from flask import Blueprint, jsonify, request

from app.config import STUB_THEORIES, THEORIES
from app.services.analysis import error_response
from app.utils.dsl_io import parse_term, parse_type
from app.utils.errors import ConfigError, ImpureProblem, TypeflawError, UnsupportedTheory
from app.utils.terms import Atom, Term, Variable, format_term
from app.utils.unify_equational import unify_terms

logger = logging.getLogger(__name__)

unify_bp = Blueprint('unify', __name__)


def declared(symbols: Dict[str, str]) -> Dict[str, Term]:
    """{"N_A": "nonce", "b": "agent"}: uppercase names are variables, the rest atoms"""
    out: Dict[str, Term] = {}
    for name, type_text in (symbols or {}).items():
        ty = parse_type(type_text)
        out[name] = Variable(name, ty) if name[:1].isupper() or name[:1] == "_" else Atom(name, ty)
    return out


@unify_bp.route('/unify', methods=['POST', 'OPTIONS'])
def unify():
    if request.method == 'OPTIONS':
        return '', 204

    data = request.get_json(silent=True) or {}
    left, right = data.get('left'), data.get('right')
    if not left or not right:
        return jsonify({"error": "left and right are required"}), 400
    theory = data.get('theory', 'std')
    try:
        if theory in STUB_THEORIES:
            raise UnsupportedTheory(theory)
        if theory not in THEORIES:
            raise ConfigError(f"unknown theory: {theory}")
        symbols = declared(data.get('declarations'))
        t, u = parse_term(left, symbols), parse_term(right, symbols)
        try:
            found = unify_terms(t, u, theory, bool(data.get('assoc')))
        except ImpureProblem as e:
            raise ConfigError(f"{e}; use theory acun")
    except TypeflawError as e:
        return error_response(e)

    logger.debug("unify %s ~ %s: %d unifier(s)", left, right, len(found))
    return jsonify({
        "left": format_term(t),
        "right": format_term(u),
        "theory": theory,
        "unifiers": [{var.name: format_term(value) for var, value in sigma.items()} for sigma in found],
    })

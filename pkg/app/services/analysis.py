"""
analysis service
NUT checks, tagging, constraint solving and attack search over posted protocol text
"""
import logging
from dataclasses import replace

from flask import Blueprint, current_app, jsonify, request

from app.config import AnalysisConfig
from app.utils.analysis import TAG_SCHEMES, check_nut, find_typeflaw, solve_sequences
from app.utils.dsl_io import emit_trace, format_protocol, parse_protocol, parse_scenario
from app.utils.errors import (
    ConfigError, IllTypedHonestSubstitution, InvariantViolation, ProtocolError, TypeflawError,
    UnknownVariable, UnsupportedTheory,
)
from app.utils.reports import as_records, nut_frame, sequences_frame

logger = logging.getLogger(__name__)

analysis_bp = Blueprint('analysis', __name__)


def error_response(e: TypeflawError):
    """map analyzer errors onto http status codes"""
    if isinstance(e, UnsupportedTheory):
        status = 422
    elif isinstance(e, InvariantViolation):
        status = 500
    elif isinstance(e, (ProtocolError, ConfigError, IllTypedHonestSubstitution, UnknownVariable)):
        status = 400
    else:
        status = 500
    logger.info("request failed (%d): %s", status, e)
    return jsonify({"error": str(e), "type": type(e).__name__}), status


def config_from(data: dict) -> AnalysisConfig:
    """request overrides on top of the app's default configuration"""
    base: AnalysisConfig = current_app.config['ANALYSIS_CONFIG']
    overrides = {k: data[k] for k in ("theory", "max_depth", "max_states", "xor_subset_bound", "verify")
                 if data.get(k) is not None}
    config = replace(base, **overrides)
    rules = data.get('rules') or []
    if isinstance(rules, str):
        rules = rules.split(",")
    config = config.with_rules(rules)
    config.validate()
    return config


def _bundle(data: dict):
    protocol_text = data.get('protocol')
    scenario_text = data.get('scenario')
    if not protocol_text or not scenario_text:
        raise ProtocolError("protocol and scenario are required")
    protocol = parse_protocol(protocol_text)
    return protocol, parse_scenario(scenario_text, protocol)


@analysis_bp.route('/nut', methods=['POST', 'OPTIONS'])
def nut():
    """check a protocol for non-unifiability of its compound terms"""
    if request.method == 'OPTIONS':
        return '', 204

    data = request.get_json(silent=True) or {}
    if not data.get('protocol'):
        return jsonify({"error": "protocol is required"}), 400
    try:
        protocol = parse_protocol(data['protocol'])
        report = check_nut(protocol, commutative=bool(data.get('commutative')))
    except TypeflawError as e:
        return error_response(e)

    result = report.to_dict()
    result["protocol"] = protocol.name
    result["table"] = as_records(nut_frame(report))
    return jsonify(result)


@analysis_bp.route('/tag', methods=['POST', 'OPTIONS'])
def tag():
    if request.method == 'OPTIONS':
        return '', 204

    data = request.get_json(silent=True) or {}
    scheme = data.get('scheme', 'types')
    if scheme not in TAG_SCHEMES:
        return jsonify({"error": f"unknown scheme: {scheme}"}), 400
    if not data.get('protocol'):
        return jsonify({"error": "protocol is required"}), 400
    try:
        tagged = TAG_SCHEMES[scheme](parse_protocol(data['protocol']))
        report = check_nut(tagged)
    except TypeflawError as e:
        return error_response(e)

    return jsonify({
        "protocol": format_protocol(tagged),
        "name": tagged.name,
        "scheme": scheme,
        "nut": report.to_dict(),
    })


@analysis_bp.route('/solve', methods=['POST', 'OPTIONS'])
def solve():
    """per-sequence satisfier counts for a protocol and scenario"""
    if request.method == 'OPTIONS':
        return '', 204

    data = request.get_json(silent=True) or {}
    try:
        _, bundle = _bundle(data)
        rows = solve_sequences(bundle, config_from(data))
    except TypeflawError as e:
        return error_response(e)

    return jsonify({
        "scenario": bundle.name,
        "sequences": as_records(sequences_frame(rows)),
    })


@analysis_bp.route('/analyze', methods=['POST', 'OPTIONS'])
def analyze():
    if request.method == 'OPTIONS':
        return '', 204

    data = request.get_json(silent=True) or {}
    try:
        protocol, bundle = _bundle(data)
        verdict = find_typeflaw(bundle, config_from(data))
    except TypeflawError as e:
        return error_response(e)

    logger.info("analyze %s/%s: %s", protocol.name, bundle.name, verdict.kind)
    return jsonify(emit_trace(verdict, protocol.name, bundle.name))

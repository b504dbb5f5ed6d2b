import pytest

from app.utils.associativity import equal_modulo_assoc, flatten_pairs, list_elements, mgu_assoc
from app.utils.errors import ImpureProblem
from app.utils.terms import NONCE, Concat, Hash, Substitution, SymEnc, Variable, apply, numeral, xor
from tests.symbols import X, Y, a, b, c, k, n_b


def test_flatten_pairs():
    nested = Concat((a, Concat((b, c))))
    assert flatten_pairs(nested) == Concat((a, b, c))
    assert flatten_pairs(Hash(Concat((Concat((a, b)), c)))) == Hash(Concat((a, b, c)))
    assert list_elements(a) == (a,)


def test_equal_modulo_assoc():
    assert equal_modulo_assoc(Concat((Concat((a, b)), c)), Concat((a, Concat((b, c)))))
    assert not equal_modulo_assoc(Concat((a, b)), Concat((b, a)))


def test_variable_absorbs_a_segment():
    found = mgu_assoc(Concat((a, b, X)), Concat((a, b, c, n_b)))
    assert found == [Substitution({X: Concat((c, n_b))})]


def test_forged_field_under_encryption():
    X_body = Variable("X", NONCE)
    forged = SymEnc(Concat((a, b, X_body)), k)
    honest = SymEnc(Concat((a, b, n_b, numeral(3))), k)
    found = mgu_assoc(forged, honest)
    assert found == [Substitution({X_body: Concat((n_b, numeral(3)))})]


def test_every_split_is_returned():
    found = mgu_assoc(Concat((X, Y)), Concat((a, b, c)))
    assert len(found) == 2
    for sigma in found:
        assert equal_modulo_assoc(apply(sigma, Concat((X, Y))), Concat((a, b, c)))


def test_no_unifier():
    assert mgu_assoc(Concat((a, X)), Concat((b, c))) == []


def test_xor_is_rejected():
    with pytest.raises(ImpureProblem):
        mgu_assoc(xor(X, a), b)

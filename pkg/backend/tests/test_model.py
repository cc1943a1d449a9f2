"""Unit tests for model construction, validation and loading."""
import json

import numpy as np
import pytest

from app.core.errors import ModelValidationError
from app.schemas.model import Alphabet, DistortionMatrix
from app.services.model import (
    hamming_distortion,
    load_model,
    normalize_distortion,
    product_distortion,
    validate_model,
)

BINARY = ["0", "1"]


def make_binary(P=(0.4, 0.6), M=(1.0, 1.0), rho=((0.0, 1.0), (1.0, 0.0)), **kwargs):
    """Build a binary model with Hamming distortion by default."""
    return validate_model(BINARY, None, P, M, rho, **kwargs)


def write_model(tmp_path, payload, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


class TestValidateModel:
    """Test cases for validate_model."""

    def test_accepts_valid_model(self):
        """A positive P, positive M and zero-per-row rho pass."""
        model = make_binary()
        assert model.source.size == 2
        assert model.d_max == 1.0
        assert model.r_max == pytest.approx(np.log(2.0))

    def test_rejects_zero_probability(self):
        """Zero P entries are reported by index."""
        with pytest.raises(ModelValidationError, match="nonpositive P entry at index 0"):
            make_binary(P=(0.0, 1.0))

    def test_rejects_row_without_zero(self):
        """Each source symbol needs a zero-distortion reproduction."""
        with pytest.raises(ModelValidationError, match="row 1 has no zero"):
            make_binary(rho=((0.0, 1.0), (1.0, 0.5)))

    def test_normalize_fixes_row_without_zero(self):
        """Subtracting row minima repairs the zero-per-row condition."""
        model = make_binary(rho=((0.0, 1.0), (1.0, 0.5)), normalize=True)
        np.testing.assert_allclose(model.distortion, [[0.0, 1.0], [0.5, 0.0]])

    def test_rejects_negative_distortion(self):
        with pytest.raises(ModelValidationError, match=r"negative rho entry at \(0, 1\)"):
            make_binary(rho=((0.0, -1.0), (1.0, 0.0)))

    def test_rejects_nonpositive_mass(self):
        with pytest.raises(ModelValidationError, match="nonpositive M entry at index 1"):
            make_binary(M=(1.0, 0.0))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ModelValidationError, match="dimension mismatch"):
            make_binary(P=(0.2, 0.3, 0.5))

    def test_rejects_unnormalized_law(self):
        with pytest.raises(ModelValidationError, match="sums to"):
            make_binary(P=(0.5, 0.6))

    def test_renormalize_rescales_law(self):
        model = make_binary(P=(1.0, 3.0), renormalize=True)
        np.testing.assert_allclose(model.p, [0.25, 0.75])

    def test_rejects_single_symbol_source(self):
        with pytest.raises(ModelValidationError, match="at least 2 symbols"):
            validate_model(["a"], None, [1.0], [1.0], [[0.0]])

    def test_arrays_are_read_only(self):
        """Validated arrays cannot be mutated in place."""
        model = make_binary()
        with pytest.raises(ValueError):
            model.p[0] = 0.9


class TestDistortion:
    """Test cases for distortion helpers."""

    def test_product_distortion_averages_letters(self):
        rho = DistortionMatrix(
            source=Alphabet.of(BINARY), reproduction=Alphabet.of(BINARY), values=[[0.0, 2.0], [1.0, 0.0]]
        )
        assert product_distortion("01", "10", rho) == pytest.approx(1.5)

    def test_product_distortion_hamming(self):
        rho = hamming_distortion(BINARY)
        assert product_distortion("0110", "0000", rho) == pytest.approx(0.5)

    def test_product_distortion_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            product_distortion("01", "010", hamming_distortion(BINARY))

    def test_product_distortion_ignores_joint_permutation(self):
        """Reordering both words the same way leaves the average unchanged."""
        rng = np.random.default_rng(7)
        rho = DistortionMatrix(
            source=Alphabet.of(["a", "b", "c"]),
            reproduction=Alphabet.of(["a", "b"]),
            values=rng.uniform(0.0, 3.0, size=(3, 2)),
        )
        for _ in range(20):
            x = rng.integers(0, 3, size=9)
            y = rng.integers(0, 2, size=9)
            order = rng.permutation(9)
            value = product_distortion(x, y, rho)
            assert product_distortion(x[order], y[order], rho) == pytest.approx(value, rel=1e-12)
            assert rho.values.min() - 1e-12 <= value <= rho.values.max() + 1e-12

    def test_normalize_is_idempotent(self):
        table = np.array([[2.0, 3.0, 5.0], [1.0, 1.5, 4.0]])
        once = normalize_distortion(table)
        np.testing.assert_array_equal(normalize_distortion(once), once)
        assert np.all(once.min(axis=1) == 0.0)

    def test_hamming_between_alphabets(self):
        rho = hamming_distortion(["a", "b"], ["a", "b", "*"])
        np.testing.assert_array_equal(rho.values, [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0]])

    def test_alphabet_encodes_multi_char_labels(self):
        alphabet = Alphabet.of(["lo", "hi"])
        np.testing.assert_array_equal(alphabet.encode("hi lo hi"), [1, 0, 1])
        assert alphabet.decode([0, 1]) == "lo hi"


class TestLoadModel:
    """Test cases for reading model files."""

    def test_loads_keywords(self, tmp_path):
        """'P' mass and 'hamming' distortion expand to arrays."""
        path = write_model(tmp_path, {"source_alphabet": BINARY, "P": [0.6, 0.4], "M": "P", "rho": "hamming"})
        model = load_model(path)
        np.testing.assert_allclose(model.m, [0.6, 0.4])
        np.testing.assert_array_equal(model.distortion, [[0.0, 1.0], [1.0, 0.0]])

    def test_counting_mass(self, tmp_path):
        path = write_model(tmp_path, {"source_alphabet": BINARY, "P": [0.4, 0.6], "M": "counting", "rho": "hamming"})
        np.testing.assert_array_equal(load_model(path).m, [1.0, 1.0])

    def test_missing_file_names_path(self, tmp_path):
        missing = tmp_path / "nope.json"
        with pytest.raises(ModelValidationError, match="nope.json"):
            load_model(missing)

    def test_malformed_json_reports_position(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"P": [0.5, 0.5],,}')
        with pytest.raises(ModelValidationError, match=r"broken.json:1:"):
            load_model(path)

    def test_unknown_field_rejected(self, tmp_path):
        path = write_model(
            tmp_path, {"source_alphabet": BINARY, "P": [0.5, 0.5], "M": "counting", "rho": "hamming", "extra": 1}
        )
        with pytest.raises(ModelValidationError, match="extra"):
            load_model(path)

    def test_auto_normalize_flag(self, tmp_path):
        path = write_model(
            tmp_path,
            {
                "source_alphabet": BINARY,
                "P": [0.5, 0.5],
                "M": "counting",
                "rho": [[1.0, 2.0], [3.0, 1.0]],
                "auto_normalize_rho": True,
            },
        )
        np.testing.assert_allclose(load_model(path).distortion, [[0.0, 1.0], [2.0, 0.0]])


class TestDigest:
    """Test cases for model digests."""

    def test_digest_is_stable(self):
        assert make_binary().digest == make_binary().digest
        assert len(make_binary().digest) == 16

    def test_digest_tracks_source_law(self):
        model = make_binary()
        assert model.with_source([0.5, 0.5]).digest != model.digest


if __name__ == "__main__":
    pytest.main([__file__, "-v"])

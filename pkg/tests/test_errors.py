import pickle

import pytest

from aavit.errors import (
    AAViTError,
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    EmptySplitError,
    ManifestValidationError,
    NumericError,
    ParameterError,
    ParseError,
    UndefinedMetricError,
    UnknownSampleError,
)

ALL_ERRORS = [
    ConfigError("bad config"),
    DimensionError("shapes [2, 3] and [3, 2] differ"),
    ParameterError("P out of range"),
    ContractError("scalar loss needed"),
    CheckpointError("bad magic"),
    DataError("no such file"),
    EmptySplitError("split 'train' is empty"),
    ParseError("truncated payload", 15, "frame.ppm"),
    ManifestValidationError("label/attack type mismatch", ["line 3", "line 7"]),
    UndefinedMetricError("no attack samples"),
    UnknownSampleError("unknown sample id: x"),
    NumericError("loss is NaN", step=7),
]


class TestExitCodes:
    """Tests for the exit code carried by each error class"""

    @pytest.mark.parametrize("error, code", [
        (ConfigError("x"), 2),
        (CheckpointError("x"), 2),
        (DataError("x"), 3),
        (ParseError("x", 0), 3),
        (NumericError("x"), 4),
    ])
    def test_codes(self, error, code):
        """Test config, data and numeric codes"""
        assert error.exit_code == code

    def test_empty_split_is_a_data_error(self):
        """Test that an empty split exits 3 while still being a contract violation"""
        error = EmptySplitError("split 'dev' is empty")
        assert isinstance(error, DataError) and isinstance(error, ContractError)
        assert error.exit_code == 3


class TestPickling:
    """Tests for errors crossing a process boundary"""

    @pytest.mark.parametrize("error", ALL_ERRORS, ids=lambda e: type(e).__name__)
    def test_round_trip(self, error):
        """Test that type, message and exit code survive pickling"""
        restored = pickle.loads(pickle.dumps(error))
        assert type(restored) is type(error)
        assert str(restored) == str(error)
        assert restored.exit_code == error.exit_code
        assert isinstance(restored, AAViTError)

    def test_extra_fields_survive(self):
        """Test that offset, path, offenders and step are restored"""
        parse = pickle.loads(pickle.dumps(ParseError("truncated payload", 15, "frame.ppm")))
        assert (parse.offset, parse.path) == (15, "frame.ppm")
        assert str(parse) == "frame.ppm: truncated payload at byte offset 15"
        offenders = pickle.loads(pickle.dumps(ManifestValidationError("duplicate paths", ["a.ppm"])))
        assert offenders.offenders == ["a.ppm"]
        numeric = pickle.loads(pickle.dumps(NumericError("loss is NaN", step=7)))
        assert numeric.step == 7
        assert str(numeric) == "loss is NaN (step 7)"

from fosbo.errors import (EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK,
                          ConfigError, FosboError, InvalidArgumentError,
                          NumericFailure, ParseError, PreconditionViolation)


def test_exit_codes_distinct():
    assert (EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DATA) == (0, 1, 2, 3)


def test_hierarchy():
    assert issubclass(InvalidArgumentError, ValueError)
    assert issubclass(PreconditionViolation, FosboError)
    assert issubclass(NumericFailure, ArithmeticError)
    assert issubclass(ParseError, FosboError)


def test_numeric_failure_context():
    err = NumericFailure("blew up", k=17, variable="y")
    assert err.context == {"k": 17, "variable": "y"}
    assert "blew up" in str(err)


def test_parse_error_offset():
    err = ParseError("bad magic", offset=4)
    assert err.offset == 4
    assert "byte offset 4" in str(err)
    assert ParseError("other").offset is None


def test_config_error_path_prefix():
    err = ConfigError("must be positive", path="schedule.k0")
    assert str(err).startswith("schedule.k0:")
    assert err.path == "schedule.k0"

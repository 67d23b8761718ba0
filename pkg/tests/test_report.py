import json

import numpy as np
import pytest

from coarsehom.report import SCHEMA, SchemaError, clean, csv_text, dumps, loads, make_report


def test_round_trip_is_bit_identical():
    rep = make_report("decide", {"a": 1}, {"x": np.float64(0.1), "v": np.arange(3), "t": (1, 2)})
    text = dumps(rep)
    assert dumps(loads(text)) == text
    assert loads(text)["schema"] == SCHEMA


def test_non_finite_values_become_null():
    assert clean({"a": float("nan"), "b": [np.inf, 1.5]}) == {"a": None, "b": [None, 1.5]}


def test_old_schema_is_rejected():
    rep = make_report("cut", {}, {})
    rep["schema"] = "coarsehom.report/0"
    with pytest.raises(SchemaError, match="unsupported report schema"):
        loads(json.dumps(rep))
    with pytest.raises(SchemaError, match="missing schema"):
        loads("{}")


def test_csv_keeps_full_precision():
    text = csv_text(["lambda", "N"], [[0.1 + 0.2, 3]])
    assert text == "lambda,N\n0.30000000000000004,3\n"

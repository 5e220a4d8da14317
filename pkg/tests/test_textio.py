import io

import numpy as np

from drillplan import geology, textio
from drillplan.geology import default_hypotheses


def test_geomodel_round_trip():
    truth = geology.sample_truth(default_hypotheses()[3], np.random.default_rng(1))
    buf = io.StringIO()
    textio.write_geomodel(truth, buf)
    buf.seek(0)
    back = textio.read_geomodel(buf)
    np.testing.assert_array_equal(back.thickness, truth.thickness)
    np.testing.assert_array_equal(back.grade, truth.grade)
    np.testing.assert_array_equal(back.graben_mask, truth.graben_mask)
    np.testing.assert_array_equal(back.geochem_mask, truth.geochem_mask)
    assert back.hypothesis_id == truth.hypothesis_id


def test_byte_stable_encoding():
    truth = geology.sample_truth(default_hypotheses()[0], np.random.default_rng(2))
    a, b = io.StringIO(), io.StringIO()
    textio.write_geomodel(truth, a)
    textio.write_geomodel(truth, b)
    assert a.getvalue() == b.getvalue()
    assert a.getvalue().startswith("geomodel v1\n")

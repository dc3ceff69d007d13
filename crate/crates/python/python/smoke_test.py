"""Smoke test for the covihawkes extension module."""

import math
import os
import tempfile

import covihawkes as ch


def main():
    assert math.isclose(ch.intensity(1.0, [0.5, 0.5], [1.0, 1.0], [1.0, 0.0]), 1.5)
    assert ch.discount(10.0, 0.0, 0.0, 100.0) == 10.0
    assert ch.discount(10.0, 60.0, 40.0, 100.0) == 0.0
    assert [len(ch.make_intervals(1, 84, w)) for w in (7, 14, 28)] == [12, 11, 9]
    assert math.isclose(ch.mape([10, 10], [9.0, 9.0]), 10.0)
    assert [p[0] for p in ch.builtin_presets()] == ["strict", "unlock7", "none", "current"]

    record = ch.generate(2.0, [0.2, 0.3, 0.5], 0.7, 1_000_000, 120, seed=3)
    assert len(record) == 120
    config = ch.ModelConfig(lag=3, delta=2, hidden=2, max_iters=50, seed=1)
    report = ch.fit(record, config)
    assert report.final_nll <= report.nll_trace[0]
    params = report.params
    assert math.isclose(sum(params.weights), 1.0, abs_tol=1e-9)
    assert math.isclose(ch.total_nll(params, record, config), report.final_nll)

    rows = ch.long_forecast(params, config, record, "2020-03-02", "2020-03-15", 30)
    assert len(rows) == 30 and all(r[2] >= 0 for r in rows)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.json")
        ch.save_model(path, "SYN", params, config)
        region, loaded, cfg = ch.load_model(path)
        assert region == "SYN" and loaded.flatten() == params.flatten() and cfg.lag == 3

    try:
        ch.make_intervals(1, 10, 28)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")
    print("smoke test passed")


if __name__ == "__main__":
    main()

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iarqp import cli
from iarqp.bench import (CSV_FIELDS, SweepRow, SweepSpec, aggregate, emit, fit_slope,
                         load_config, load_sweep_spec, random_ball_point, read_rows, run_sweep,
                         sweep_runs)
from iarqp.driver import Config, ConfigError
from iarqp.oracles import NoiseSpec


def row(eps, mean, frac=1.0):
    return SweepRow(eps, 4, mean, mean, 0.0, mean, 2 * mean, frac, 1.0)


class TestSweep:
    def test_single_quadratic_run(self):
        rows = run_sweep(SweepSpec("quadratic", dim=2, epsilons=(1e-2,), seeds=(0,)))
        assert len(rows) == 1 and rows[0].frac_converged == 1.0 and rows[0].n_runs == 1

    def test_duplicate_seeds_replay(self):
        spec = SweepSpec("quartic", dim=3, epsilons=(1e-3,), seeds=(4, 4),
                         config=Config(noise=NoiseSpec("gaussian_relative")))
        a, b = sweep_runs(spec)
        assert a == b

    def test_exact_oracle_p_star(self):
        rows = run_sweep(SweepSpec("rosenbrock", dim=2, epsilons=(1e-2, 1e-3), seeds=(0, 1)))
        assert all(r.empirical_p_star == 1.0 for r in rows)

    def test_parallel_matches_serial(self):
        spec = SweepSpec("quartic", dim=3, epsilons=(1e-2, 1e-3), seeds=(0, 1, 2),
                         config=Config(noise=NoiseSpec("gaussian_relative")))
        assert run_sweep(spec, workers=2) == run_sweep(spec)

    def test_failures_recorded_not_fatal(self):
        spec = SweepSpec("rosenbrock", dim=2, x0=(-1.2, 1.0), epsilons=(1e-3,), seeds=(0, 1),
                         config=Config(inner_budget=0))
        (r,) = run_sweep(spec)
        assert r.frac_converged == 0.0 and math.isnan(r.mean_N) and r.n_runs == 2

    def test_aggregation_uses_converged_runs(self):
        from iarqp.bench import RunSummary
        runs = [RunSummary(0.1, 0, 4, "converged", 4, 8, 4, 4, True),
                RunSummary(0.1, 1, 6, "converged", 6, 12, 6, 3, True),
                RunSummary(0.1, 2, None, "budget_exhausted", 9, 18, 9, 9, True)]
        (r,) = aggregate(runs)
        assert (r.mean_N, r.median_N, r.frac_converged) == (5.0, 5.0, pytest.approx(2 / 3))
        assert r.stddev_N == pytest.approx(math.sqrt(2))
        assert r.mean_deriv_evals == 5.0 and r.mean_f_evals == 10.0
        assert r.empirical_p_star == pytest.approx(16 / 19)

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            SweepSpec(epsilons=(0.0,))
        with pytest.warns(UserWarning):
            SweepSpec(epsilons=(1e-3, 1e-2))

    @given(st.integers(0, 10_000), st.integers(1, 6), st.floats(0.1, 5))
    def test_start_points_in_ball(self, seed, n, r):
        x = random_ball_point(n, r, seed)
        assert np.linalg.norm(x) <= r
        np.testing.assert_array_equal(x, random_ball_point(n, r, seed))


class TestSlope:
    def test_exact_power_law(self):
        rows = [row(e, 3.0 * e ** -1.5) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
        assert fit_slope(rows).slope == pytest.approx(1.5, abs=1e-9)
        assert fit_slope(rows).r_squared == pytest.approx(1.0)

    def test_constant(self):
        fit = fit_slope([row(e, 7.0) for e in (1e-1, 1e-2, 1e-3)])
        assert fit.slope == 0.0

    def test_jittered_power_law(self):
        eps = np.logspace(-1, -6, 6)
        rng = np.random.default_rng(8)
        for _ in range(200):
            jitter = rng.uniform(0.9, 1.1, eps.size)
            rows = [row(e, 2.0 * e ** -1.5 * j) for e, j in zip(eps, jitter)]
            assert abs(fit_slope(rows).slope - 1.5) <= 0.15

    def test_refusals(self):
        with pytest.raises(ValueError):
            fit_slope([row(1e-1, 2.0), row(1e-2, 4.0)])
        with pytest.raises(ValueError):
            fit_slope([row(1e-1, 2.0), row(1e-2, 4.0), row(1e-3, 8.0, frac=0.9)])


class TestEmit:
    def test_header_only(self, tmp_path):
        emit([], tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text() == ",".join(CSV_FIELDS) + "\n"

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_round_trip(self, tmp_path, fmt):
        rows = [SweepRow(0.1, 3, 1 / 3, 2.0, math.pi, 0.1 + 0.2, 1e-300, 2 / 3, math.nan),
                SweepRow(1e-4, 20, 7.0, 7.0, 0.0, 7.0, 14.0, 1.0, 0.987654321987654)]
        path = tmp_path / f"rows.{fmt}"
        emit(rows, path, fmt)
        back = read_rows(path)
        for a, b in zip(rows, back):
            for k in CSV_FIELDS:
                va, vb = getattr(a, k), getattr(b, k)
                assert (math.isnan(va) and math.isnan(vb)) or va == vb

    def test_seventeen_digits(self, tmp_path):
        emit([row(0.1, 1 / 3)], tmp_path / "r.csv")
        line = (tmp_path / "r.csv").read_text().splitlines()[1]
        assert line.split(",")[2] == format(1 / 3, ".17g")
        assert float(line.split(",")[2]) == 1 / 3

    def test_bad_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit([], tmp_path / "x", "xml")


SPEC = """
[problem]
name = quartic
n = 3
x0 = random
radius = 1.0

[algorithm]
p = 2
q = 1
theta = 0.2
max_iterations = 300

[noise]
kind = gaussian_relative
p_star_target = 0.8
mode = closed_loop

[sweep]
epsilons = 1e-2, 1e-3, 1e-4
seeds = 0, 1
"""


class TestConfigFiles:
    def test_sweep_spec(self, tmp_path):
        path = tmp_path / "s.ini"
        path.write_text(SPEC)
        spec = load_sweep_spec(path)
        assert spec.problem == "quartic" and spec.dim == 3 and spec.seeds == (0, 1)
        assert spec.epsilons == (1e-2, 1e-3, 1e-4)
        assert spec.config.theta == 0.2 and spec.config.noise.kind == "gaussian_relative"
        assert spec.config.omega == pytest.approx(0.045)

    def test_every_field_settable(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("""
[algorithm]
p = 3
q = 2
epsilon = 1e-2, 1e-3
theta = 0.3
eta = 0.2
gamma = 3
sigma0 = 2
sigma_min = 1e-6
omega = 0.05
alpha = 0.7
max_iterations = 10
noise_mode = open_loop
f_estimate_mode = adversarial
seed = 4
instrument_events = no
inner_budget = 50
open_loop_budget = 1e-4
budget_floor = 1e-20
stop_on_model = yes
max_resamples = 2
[noise]
kind = adversarial_sign
p_star_target = 0.9
magnitude = 0.5
batch_fraction = 0.25
""")
        c = load_config(path)
        assert c == Config(p=3, q=2, epsilon=(1e-2, 1e-3), theta=0.3, eta=0.2, gamma=3.0,
                           sigma0=2.0, sigma_min=1e-6, omega=0.05, alpha=0.7, max_iterations=10,
                           noise_mode="open_loop", f_estimate_mode="adversarial", seed=4,
                           instrument_events=False, inner_budget=50, open_loop_budget=1e-4,
                           budget_floor=1e-20, stop_on_model=True, max_resamples=2,
                           noise=NoiseSpec("adversarial_sign", 0.9, 0.5, 0.25))

    @pytest.mark.parametrize("text", ["[algorithm]\nbogus = 1\n", "[algorithm]\ntheta = 0.7\n",
                                      "[noise]\nkind = loud\n", "[extra]\na = 1\n",
                                      "[algorithm]\np = two\n"])
    def test_errors(self, tmp_path, text):
        path = tmp_path / "bad.ini"
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_config(path)


class TestCli:
    def test_run(self, capsys, tmp_path):
        trace = tmp_path / "t.jsonl"
        code = cli.main(["run", "--problem", "rosenbrock", "--dim", "2", "--x0=-1.2,1",
                         "--trace-out", str(trace)])
        out = json.loads(capsys.readouterr().out)
        assert code == 0 and out["termination"] == "converged"
        assert len(trace.read_text().splitlines()) == out["iterations"]

    def test_config_error(self, tmp_path, capsys):
        path = tmp_path / "c.ini"
        path.write_text("[algorithm]\neta = 0.1\nomega = 0.05\n")
        assert cli.main(["run", "--problem", "quartic", "--config", str(path)]) == 2
        assert cli.main(["run", "--problem", "nonexistent"]) == 2

    def test_inner_failure(self, tmp_path, capsys):
        path = tmp_path / "c.ini"
        path.write_text("[algorithm]\ninner_budget = 0\n")
        code = cli.main(["run", "--problem", "rosenbrock", "--x0=-1.2,1", "--config", str(path)])
        assert code == 3

    def test_sweep_and_slope(self, tmp_path, capsys):
        spec = tmp_path / "s.ini"
        spec.write_text(SPEC)
        out = tmp_path / "rows.csv"
        assert cli.main(["sweep", "--spec", str(spec), "--out", str(out)]) == 0
        rows = read_rows(out)
        assert len(rows) == 3 and all(r.n_runs == 2 for r in rows)
        assert cli.main(["slope", "--in", str(out)]) == 0
        fit = json.loads(capsys.readouterr().out)
        assert set(fit) == {"slope", "intercept", "r_squared"}

    def test_sweep_json(self, tmp_path):
        spec = tmp_path / "s.ini"
        spec.write_text(SPEC)
        out = tmp_path / "rows.json"
        assert cli.main(["sweep", "--spec", str(spec), "--out", str(out), "--format", "json"]) == 0
        assert [r["epsilon"] for r in json.loads(out.read_text())] == [1e-2, 1e-3, 1e-4]

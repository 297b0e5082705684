import itertools
import json
import sys
from pathlib import Path

import numpy as np
import pytest

from hiersearch.errors import ChildExited, EvalTimeout, ProtocolError, SpaceParseError
from hiersearch.evaluators import (
    ArchLandscape,
    EvalResult,
    Evaluator,
    ExternalEvaluator,
    SyntheticLandscape,
    cache_key,
    cached,
    external_evaluate,
    landscape_from_dict,
    landscape_to_dict,
    squash,
    synthetic_evaluate,
    unsquash,
)
from hiersearch.space import Candidate

SERVE_SYNTHETIC = Path(__file__).resolve().parent.parent / "scripts" / "serve_synthetic.py"


def cand(arch=0, macro=(0,), micro=None, iteration=0):
    return Candidate(tuple(macro), arch, micro or {}, iteration)


def one_arch_landscape(**params):
    bonus = params.pop("bonus", 1.0)
    noise = params.pop("noise_std", 0.0)
    return SyntheticLandscape(archs={0: ArchLandscape(
        bonus=bonus,
        optimum={k: v[0] for k, v in params.items()},
        weights={k: v[1] for k, v in params.items()},
        noise_std=noise,
    )})


class TestSquash:
    def test_monotone_and_invertible(self):
        xs = [-5.0, -1.0, 0.0, 0.3, 2.0]
        ys = [squash(x) for x in xs]
        assert ys == sorted(ys)
        for x in xs:
            assert unsquash(squash(x)) == pytest.approx(x, abs=1e-9)

    def test_extremes_stay_in_unit_interval(self):
        assert squash(-1e6) == 0.0
        assert squash(1e6) == 1.0


class TestSyntheticEvaluate:
    def test_optimum_attains_squashed_bonus(self):
        scape = one_arch_landscape(x=(0.3, 1.0), y=(0.7, 0.5), bonus=1.0)
        result = synthetic_evaluate(scape, cand(micro={"x": 0.3, "y": 0.7}))
        assert result.reward == squash(1.0)
        assert result.source == "synthetic"

    def test_equidistant_candidates_score_equal(self):
        scape = one_arch_landscape(x=(0.5, 1.0))
        lo = synthetic_evaluate(scape, cand(micro={"x": 0.3}))
        hi = synthetic_evaluate(scape, cand(micro={"x": 0.7}))
        assert lo.reward == hi.reward

    def test_zero_weights_depend_only_on_arch(self):
        scape = SyntheticLandscape(archs={
            0: ArchLandscape(bonus=0.2, optimum={"x": 0.5}, weights={"x": 0.0}),
            1: ArchLandscape(bonus=0.9, optimum={"x": 0.5}, weights={"x": 0.0}),
        })
        a = synthetic_evaluate(scape, cand(arch=0, micro={"x": 0.1}))
        b = synthetic_evaluate(scape, cand(arch=0, micro={"x": 0.9}))
        c = synthetic_evaluate(scape, cand(arch=1, macro=(1,), micro={"x": 0.1}))
        assert a.reward == b.reward
        assert c.reward > a.reward

    def test_noise_free_is_bit_deterministic(self):
        scape = one_arch_landscape(x=(0.25, 2.0))
        c = cand(micro={"x": 0.125})
        assert synthetic_evaluate(scape, c).reward == synthetic_evaluate(scape, c).reward

    def test_noisy_requires_rng_and_is_seed_deterministic(self):
        scape = one_arch_landscape(x=(0.5, 1.0), noise_std=0.1)
        with pytest.raises(ValueError):
            synthetic_evaluate(scape, cand(micro={"x": 0.5}))
        r1 = [synthetic_evaluate(scape, cand(micro={"x": 0.5}), np.random.default_rng(5)).reward
              for _ in range(1)]
        r2 = [synthetic_evaluate(scape, cand(micro={"x": 0.5}), np.random.default_rng(5)).reward
              for _ in range(1)]
        assert r1 == r2

    def test_grid_brute_force_finds_optimum(self):
        # oracle for the acceptance suite: 11 points per continuous dim
        scape = one_arch_landscape(x=(0.3, 1.0), y=(0.7, 0.5))
        grid = [i / 10 for i in range(11)]
        best_val, best_pt = -float("inf"), None
        for x, y in itertools.product(grid, grid):
            r = synthetic_evaluate(scape, cand(micro={"x": x, "y": y})).reward
            if r > best_val:
                best_val, best_pt = r, (x, y)
        assert best_pt == (0.3, 0.7)
        assert best_val == squash(1.0)


class CountingEvaluator(Evaluator):
    def __init__(self, fail_first=False):
        self.calls = 0
        self.fail_first = fail_first

    def evaluate(self, c):
        self.calls += 1
        if self.fail_first and self.calls == 1:
            raise RuntimeError("flaky")
        return EvalResult(reward=0.5, metrics={"n": float(self.calls)}, source="synthetic")

    def describe(self):
        return {"kind": "counting"}


class TestCache:
    def test_second_call_hits(self):
        inner = CountingEvaluator()
        ev = cached(inner)
        c = cand(micro={"x": 0.5})
        first = ev.evaluate(c)
        second = ev.evaluate(c)
        assert inner.calls == 1
        assert second.source == "cache"
        assert second.reward == first.reward
        assert dict(second.metrics) == dict(first.metrics)

    def test_distinct_micro_values_miss(self):
        inner = CountingEvaluator()
        ev = cached(inner)
        ev.evaluate(cand(micro={"x": 0.5}))
        ev.evaluate(cand(micro={"x": 0.5000001}))
        assert inner.calls == 2

    def test_errors_are_not_cached(self):
        inner = CountingEvaluator(fail_first=True)
        ev = cached(inner)
        c = cand(micro={"x": 0.5})
        with pytest.raises(RuntimeError):
            ev.evaluate(c)
        assert ev.evaluate(c).source == "synthetic"
        assert inner.calls == 2

    def test_key_rounds_to_12_significant_digits(self):
        a = cand(micro={"x": 0.1234567890123456})
        b = cand(micro={"x": 0.1234567890123999})
        c = cand(micro={"x": 0.1234567890199999})
        assert cache_key(a) == cache_key(b)
        assert cache_key(a) != cache_key(c)

    def test_iteration_field_is_not_part_of_the_key(self):
        assert cache_key(cand(iteration=0)) == cache_key(cand(iteration=9))


@pytest.fixture
def small_landscape_file(tmp_path):
    scape = SyntheticLandscape(archs={
        0: ArchLandscape(bonus=0.5, optimum={"x": 0.4}, weights={"x": 1.0}),
        1: ArchLandscape(bonus=1.0, optimum={"x": 0.6}, weights={"x": 2.0}),
    })
    p = tmp_path / "landscape.json"
    p.write_text(json.dumps(landscape_to_dict(scape)))
    return p, scape


def child_script(body: str) -> list[str]:
    return [sys.executable, "-u", "-c", body]


READY_PREAMBLE = (
    "import sys, json\n"
    "sys.stdin.readline()\n"
    "print(json.dumps({'ready': {'protocol': 1}}), flush=True)\n"
)


class TestExternalEvaluator:
    def test_loopback_reproduces_synthetic_exactly(self, small_landscape_file):
        path, scape = small_landscape_file
        candidates = [
            cand(arch=0, macro=(0,), micro={"x": 0.1 * i}) for i in range(5)
        ] + [cand(arch=1, macro=(1,), micro={"x": 0.2 * i}) for i in range(3)]
        with ExternalEvaluator([sys.executable, str(SERVE_SYNTHETIC), str(path)],
                               timeout=30.0) as ext:
            for c in candidates:
                local = synthetic_evaluate(scape, c)
                remote = ext.evaluate(c)
                assert remote.reward == local.reward
                assert remote.source == "external"

    def test_external_evaluate_function(self, small_landscape_file):
        path, scape = small_landscape_file
        with ExternalEvaluator([sys.executable, str(SERVE_SYNTHETIC), str(path)],
                               timeout=30.0) as ext:
            c = cand(arch=0, macro=(0,), micro={"x": 0.3})
            got = external_evaluate(ext, c, timeout=20.0)
            assert got.reward == synthetic_evaluate(scape, c).reward

    def test_malformed_response_raises_protocol_error(self):
        script = READY_PREAMBLE + (
            "for line in sys.stdin:\n"
            "    print('this is not json', flush=True)\n"
        )
        with ExternalEvaluator(child_script(script), timeout=10.0) as ext:
            with pytest.raises(ProtocolError) as err:
                ext.evaluate(cand())
            assert "not is" not in str(err.value)
            assert err.value.payload == "this is not json"

    def test_id_mismatch_raises_protocol_error(self):
        script = READY_PREAMBLE + (
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    print(json.dumps({'id': req['id'] + 1, 'reward': 0.5}), flush=True)\n"
        )
        with ExternalEvaluator(child_script(script), timeout=10.0) as ext:
            with pytest.raises(ProtocolError, match="does not match"):
                ext.evaluate(cand())

    def test_error_response_raises_protocol_error(self):
        script = READY_PREAMBLE + (
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    print(json.dumps({'id': req['id'], 'error': 'no can do'}), flush=True)\n"
        )
        with ExternalEvaluator(child_script(script), timeout=10.0) as ext:
            with pytest.raises(ProtocolError, match="no can do"):
                ext.evaluate(cand())

    def test_timeout(self):
        script = READY_PREAMBLE + (
            "import time\n"
            "for line in sys.stdin:\n"
            "    time.sleep(60)\n"
        )
        with ExternalEvaluator(child_script(script), timeout=0.5) as ext:
            with pytest.raises(EvalTimeout):
                ext.evaluate(cand())

    def test_child_exit_mid_request(self):
        script = READY_PREAMBLE + (
            "sys.stdin.readline()\n"
            "sys.exit(3)\n"
        )
        with ExternalEvaluator(child_script(script), timeout=10.0) as ext:
            with pytest.raises(ChildExited, match="returncode=3"):
                ext.evaluate(cand())

    def test_non_numeric_reward_rejected(self):
        script = READY_PREAMBLE + (
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    print(json.dumps({'id': req['id'], 'reward': 'great'}), flush=True)\n"
        )
        with ExternalEvaluator(child_script(script), timeout=10.0) as ext:
            with pytest.raises(ProtocolError, match="finite number"):
                ext.evaluate(cand())

    def test_bad_handshake_rejected(self):
        script = "import sys\nsys.stdin.readline()\nprint('hi there', flush=True)\n"
        ext = ExternalEvaluator(child_script(script), timeout=10.0)
        with pytest.raises(ProtocolError):
            ext.start()
        ext.close()


class TestLandscapeSerialisation:
    def test_round_trip(self, small_landscape_file):
        _, scape = small_landscape_file
        assert landscape_from_dict(landscape_to_dict(scape)) == scape

    def test_missing_key_names_path(self):
        with pytest.raises(SpaceParseError) as err:
            landscape_from_dict({"archs": {"0": {"bonus": 1.0, "optimum": {}}}})
        assert err.value.path == "landscape.archs.0.weights"

    def test_mismatched_optimum_weights_rejected(self):
        with pytest.raises(SpaceParseError):
            landscape_from_dict({"archs": {"0": {
                "bonus": 1.0, "optimum": {"x": 0.5}, "weights": {"y": 1.0},
            }}})

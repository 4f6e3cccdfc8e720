"""
Tests for sim module: rounds, mirror oracle and cost ledger
"""
from fractions import Fraction

import numpy as np
import pytest

from utils import sim
from utils.audit import certify_round
from utils.client import Answer
from utils.codec import Database, ServerStorage, decode_database, encode_storage, random_storage_noise
from utils.errors import (
    ConfigurationError,
    InfeasibleReadError,
    InfeasibleWriteError,
    InvalidInputError,
    InvariantViolation,
)
from utils.params import RawConfig, derive, thresholds
from utils.sim import (
    TRACE_KEYS,
    DropoutSchedule,
    RoundSource,
    closed_form_costs,
    cost_table,
    decimal_text,
    execute_round,
    init,
    run_round,
    run_schedule,
    touched_per_server,
    tradeoff_sweep,
)


@pytest.fixture
def worked_state(worked_params, worked_db):
    return init(worked_params, worked_db)


@pytest.mark.integration
class TestWorkedExample:
    """Two rounds with (1, 2) then (2, 1) dropouts"""

    def test_round_one_costs(self, worked_state, rng):
        delta = worked_state.params.field.random(6, rng)
        retrieved, report = run_round(worked_state, 1, delta, [3], [5, 7])
        assert report.down_symbols == 21
        assert report.D == Fraction(7, 2)
        assert report.up_increment_symbols == 36
        assert report.U_increment == Fraction(6)
        assert report.up_query_symbols == 8 * 3 * 2
        assert report.U == Fraction(36 + 48, 6)

    def test_round_two_costs(self, worked_state, rng):
        ctx = worked_state.params.field
        run_round(worked_state, 1, ctx.random(6, rng), [3], [5, 7])
        _, report = run_round(worked_state, 2, ctx.random(6, rng), [1, 2], [8])
        assert report.t == 2
        assert report.D == Fraction(6)
        assert report.U_increment == Fraction(7, 2)

    def test_retrieval_and_mirror(self, worked_state, worked_db, rng):
        ctx = worked_state.params.field
        delta = ctx.random(6, rng)
        retrieved, _ = run_round(worked_state, 2, delta, [3], [5, 7])
        assert np.array_equal(retrieved, worked_db.entries[1])
        assert np.array_equal(worked_state.mirror.entries[1], worked_db.entries[1] + delta)
        assert np.array_equal(worked_state.mirror.entries[0], worked_db.entries[0])

    def test_write_dropouts_unchanged(self, worked_state, rng):
        before = {n: s.copy() for n, s in worked_state.states.items()}
        run_round(worked_state, 1, worked_state.params.field.random(6, rng), [3], [5, 7])
        assert worked_state.states[5].same_as(before[5])
        assert worked_state.states[7].same_as(before[7])
        assert not worked_state.states[1].same_as(before[1])

    def test_trace_record_keys(self, worked_state, rng):
        _, report = run_round(worked_state, 1, worked_state.params.field.random(6, rng), [3], [5, 7])
        record = report.to_trace_dict()
        assert set(record) == set(TRACE_KEYS)
        assert (record["D_num"], record["D_den"]) == (7, 2)
        assert record["read_dropouts"] == [3]

    def test_dual_rendering(self, worked_state, rng):
        _, report = run_round(worked_state, 1, worked_state.params.field.random(6, rng), [3], [5, 7])
        data = report.to_dict()
        assert data["D"] == "7/2"
        assert data["D_decimal"] == "3.5"
        assert data["U_increment"] == "6/1"
        assert data["eta"] == "1/8"


@pytest.mark.integration
class TestLedger:

    def test_query_upload_counts(self, worked_state, rng):
        ctx = worked_state.params.field
        per_server = 3 * 2
        _, report = run_round(worked_state, 1, ctx.random(6, rng), [1], [2])
        assert report.up_query_symbols == 8 * per_server
        assert report.up_query_symbols_alt == 6 * per_server
        _, report = run_round(worked_state, 1, ctx.random(6, rng), [1], [1])
        assert report.up_query_symbols == 7 * per_server
        assert report.up_query_symbols_alt == 7 * per_server

    def test_access_counts_symbols_touched(self, worked_state, rng):
        params = worked_state.params
        _, report = run_round(worked_state, 1, params.field.random(6, rng), [3], [5, 7])
        assert report.access_touched_per_server == params.J * params.K
        assert report.access_touched_per_server <= params.K * params.L // params.K_c

    def test_touched_per_server(self, worked_params, worked_db, rng):
        ctx = worked_params.field
        noise = random_storage_noise(worked_params, rng)
        before = {s.server_index: s for s in encode_storage(worked_db, noise, worked_params)}
        after = dict(before)
        blocks = before[2].blocks.copy()
        blocks[1, 0] = blocks[1, 0] + ctx.element(1)
        after[2] = ServerStorage(2, blocks)
        assert touched_per_server([], before, after) == 1
        assert touched_per_server([], before, before) == 0
        answers = [Answer(1, ctx.zeros((3, 1)), symbols_read=12), Answer(4, ctx.zeros((3, 1)))]
        assert touched_per_server(answers, before, after) == 12

    @pytest.mark.parametrize("raw", [
        RawConfig(N=8, K=2, X=4, T=1, X_delta=1, seed=1),
        RawConfig(N=7, K=2, X=3, T=1, X_delta=1, K_c=2, seed=2),
        RawConfig(N=9, K=2, X=4, T=2, X_delta=1, seed=3),
        RawConfig(N=6, K=3, X=2, T=1, X_delta=0, seed=4),
    ])
    def test_closed_form_agreement(self, raw):
        params = derive(raw)
        source = RoundSource.uniform(params, raw.seed)
        state = init(params, source.database())
        schedule = DropoutSchedule.random(params, 12, params.N, params.N, raw.seed)
        for report in run_schedule(state, schedule, source):
            D, U = closed_form_costs(params, len(report.read_dropouts), len(report.write_dropouts))
            assert report.D == D
            assert report.U_increment == U

    @pytest.mark.slow
    def test_closed_form_over_random_configs(self, config_sweep):
        rng = np.random.default_rng(2024)
        candidates = [raw for raw in config_sweep(10, K=2)
                      if max(thresholds(raw.N, raw.X, raw.T, raw.X_delta, raw.K_c)) <= 4]
        tuples = 0
        for index in rng.choice(len(candidates), size=25, replace=False):
            raw = candidates[int(index)]
            params = derive(raw)
            source = RoundSource.uniform(params, int(index))
            state = init(params, source.database())
            schedule = DropoutSchedule.random(params, 8, params.N, params.N, int(index))
            for report in run_schedule(state, schedule, source):
                D, U = closed_form_costs(params, len(report.read_dropouts), len(report.write_dropouts))
                assert (report.D, report.U_increment) == (D, U), (raw, report.read_dropouts, report.write_dropouts)
                tuples += 1
        assert tuples >= 200

    @pytest.mark.slow
    def test_numerical_example(self):
        params = derive(RawConfig(N=6, K=50, X=3, T=1, X_delta=1, xi=35000))
        source = RoundSource.uniform(params, 0)
        state = init(params, source.database())
        theta, delta = source.next()
        expected = state.mirror.row(theta)
        retrieved, report = run_round(state, theta, delta, verify=False)
        assert report.up_query_symbols + report.up_increment_symbols == 210600
        assert report.U == Fraction(210600, 70000)
        assert report.D == Fraction(3)
        assert abs(float(report.U) - 3.0) / 3.0 < 0.01
        assert np.array_equal(retrieved, expected)


@pytest.mark.integration
class TestVerificationAndRollback:

    def test_oracle_mismatch_rolls_back(self, worked_state, rng, monkeypatch):
        ctx = worked_state.params.field
        before = worked_state.snapshot()
        monkeypatch.setattr(sim, "decode_database",
                            lambda storages, params: Database(ctx.zeros((params.K, params.L))))
        with pytest.raises(InvariantViolation) as exc:
            run_round(worked_state, 1, ctx.random(6, rng), [3], [5, 7])
        assert exc.value.name == "mirror-mismatch"
        assert worked_state.t == before.t
        assert all(worked_state.states[n].same_as(before.states[n]) for n in range(1, 9))
        assert worked_state.mirror.equals(before.mirror)

    def test_infeasible_round_leaves_state(self, worked_state, rng):
        with pytest.raises(InfeasibleReadError):
            run_round(worked_state, 1, worked_state.params.field.random(6, rng), [1, 2, 3], [])
        assert worked_state.t == 0

    def test_schedule_reports_failing_round(self, worked_params, worked_db):
        state = init(worked_params, worked_db)
        schedule = DropoutSchedule.explicit([((), ()), ((), (1, 2, 3))])
        with pytest.raises(InfeasibleWriteError, match="Round 2"):
            run_schedule(state, schedule, RoundSource.uniform(worked_params, 5))
        assert state.t == 1

    def test_wrong_increment_length(self, worked_state):
        with pytest.raises(InvalidInputError):
            run_round(worked_state, 1, [1, 2, 3])

    def test_replay_is_bit_exact(self, worked_params, worked_db, rng):
        first = init(worked_params, worked_db)
        second = init(worked_params, worked_db)
        delta = worked_params.field.random(6, rng)
        run_round(first, 2, delta, [4], [1])
        run_round(second, 2, delta, [4], [1])
        assert all(first.states[n].same_as(second.states[n]) for n in range(1, 9))

    def test_snapshot_restore(self, worked_state, rng):
        ctx = worked_state.params.field
        saved = worked_state.snapshot()
        run_round(worked_state, 1, ctx.random(6, rng))
        worked_state.restore(saved)
        assert worked_state.t == 0
        assert all(worked_state.states[n].same_as(saved.states[n]) for n in range(1, 9))

    def test_long_run_tracks_mirror(self, tiny_params, tiny_db):
        state = init(tiny_params, tiny_db)
        source = RoundSource.uniform(tiny_params, 9)
        schedule = DropoutSchedule.random(tiny_params, 25, 1, 1, 9)
        reports = run_schedule(state, schedule, source)
        assert [r.t for r in reports] == list(range(1, 26))


SOAK_CONFIGS = [
    RawConfig(N=8, K=2, X=4, T=1, X_delta=1, seed=1),
    RawConfig(N=7, K=2, X=3, T=1, X_delta=1, K_c=2, seed=2),
    RawConfig(N=9, K=2, X=4, T=2, X_delta=1, seed=3),
    RawConfig(N=6, K=3, X=2, T=1, X_delta=0, seed=4),
    RawConfig(N=5, K=2, X=3, T=1, X_delta=1, q=11, seed=5),
    RawConfig(N=7, K=2, X=2, T=1, X_delta=1, K_c=3, seed=6),
]


@pytest.mark.integration
@pytest.mark.slow
class TestSoak:
    """Thirty random-dropout rounds per configuration, every round certified"""

    @pytest.mark.parametrize("raw", SOAK_CONFIGS, ids=lambda raw: f"N{raw.N}-X{raw.X}-T{raw.T}-Kc{raw.K_c}")
    def test_certified_rounds(self, raw):
        params = derive(raw)
        source = RoundSource.uniform(params, raw.seed)
        state = init(params, source.database())
        schedule = DropoutSchedule.random(params, 30, params.N, params.N, raw.seed)
        for read, write in schedule:
            pre = state.snapshot()
            theta, delta = source.next()
            result = execute_round(state, theta, delta, read, write)
            certificate = certify_round(pre, state, theta, delta, result.retrieved, result.round_params)
            assert certificate.passed, (state.t, certificate.failed, certificate.details)
            D, U = closed_form_costs(params, len(read), len(write))
            assert (result.report.D, result.report.U_increment) == (D, U)
        assert state.t == 30


@pytest.mark.integration
class TestMemorylessness:
    """Different dropout histories with the same reads and writes end in equivalent storage"""

    @pytest.mark.parametrize("raw,first,second", [
        (RawConfig(N=8, K=2, X=4, T=1, X_delta=1, q=11, seed=7),
         [((3,), (5, 7)), ((1, 2), (8,)), ((), ())],
         [((), ()), ((4,), (1, 2)), ((5, 6), (3,))]),
        (RawConfig(N=9, K=2, X=4, T=2, X_delta=1, seed=3),
         [((1,), (2,)), ((), (9,)), ((4, 5), ())],
         [((7, 8), ()), ((2,), (3,)), ((), (1,))]),
    ])
    def test_histories_decode_alike(self, raw, first, second):
        params = derive(raw)
        source = RoundSource.uniform(params, 17)
        initial = source.database()
        rounds = [source.next() for _ in range(4)]
        states = [init(params, initial), init(params, initial)]
        for history, state in zip((first, second), states):
            for (read, write), (theta, delta) in zip(history, rounds):
                execute_round(state, theta, delta, read, write)

        a, b = states
        assert any(not a.states[n].same_as(b.states[n]) for n in range(1, params.N + 1))
        assert decode_database(a.storages, params).equals(a.mirror)
        assert decode_database(b.storages, params).equals(b.mirror)
        assert a.mirror.equals(b.mirror)

        theta, delta = rounds[3]
        for state in states:
            pre = state.snapshot()
            result = execute_round(state, theta, delta, (2,), (6,))
            assert np.array_equal(result.retrieved, pre.mirror.entries[theta - 1])
            certificate = certify_round(pre, state, theta, delta, result.retrieved, result.round_params)
            assert certificate.passed, certificate.failed
        assert decode_database(a.storages, params).equals(decode_database(b.storages, params))


@pytest.mark.unit
class TestSchedulesAndSources:

    def test_random_schedule_is_bounded_and_seeded(self, worked_params):
        first = DropoutSchedule.random(worked_params, 30, 5, 1, 42)
        second = DropoutSchedule.random(worked_params, 30, 5, 1, 42)
        assert first.rounds == second.rounds
        assert len(first) == 30
        for read, write in first:
            assert len(read) <= worked_params.S_r_thresh - 1
            assert len(write) <= 1
            assert len(set(read)) == len(read)

    def test_negative_bounds_rejected(self, worked_params):
        with pytest.raises(ConfigurationError):
            DropoutSchedule.random(worked_params, 3, -1, 0, 0)

    def test_explicit_source(self, worked_params):
        source = RoundSource.explicit(worked_params, [(2, [1, 2, 3, 4, 5, 6])])
        theta, delta = source.next()
        assert theta == 2
        assert worked_params.field.to_ints(delta).tolist() == [1, 2, 3, 4, 5, 6]
        with pytest.raises(ConfigurationError):
            source.next()

    def test_uniform_source(self, worked_params):
        source = RoundSource.uniform(worked_params, 1)
        for _ in range(20):
            theta, delta = source.next()
            assert 1 <= theta <= worked_params.K
            assert delta.shape == (worked_params.L,)


@pytest.mark.unit
class TestCosts:

    def test_closed_form_values(self, worked_params):
        assert closed_form_costs(worked_params, 1, 2) == (Fraction(7, 2), Fraction(6))
        assert closed_form_costs(worked_params, 2, 1) == (Fraction(6), Fraction(7, 2))
        assert closed_form_costs(worked_params, 0, 0) == (Fraction(8, 3), Fraction(8, 3))

    def test_balanced_point(self):
        params = derive(RawConfig(N=10, K=1, X=5, T=1, X_delta=1))
        assert closed_form_costs(params, 0, 0) == (Fraction(10, 4), Fraction(10, 4))

    def test_thresholds_enforced(self, worked_params):
        with pytest.raises(InfeasibleReadError):
            closed_form_costs(worked_params, 3, 0)
        with pytest.raises(InfeasibleWriteError):
            closed_form_costs(worked_params, 0, 3)

    def test_cost_table_marks_infeasible(self, worked_params):
        table = cost_table(worked_params, range(0, 4), range(0, 4))
        assert len(table) == 16
        infeasible = table[~table["feasible"]]
        assert set(zip(infeasible["s_r"], infeasible["s_w"])) == {
            (s_r, s_w) for s_r in range(4) for s_w in range(4) if s_r == 3 or s_w == 3
        }
        row = table[(table["s_r"] == 1) & (table["s_w"] == 2)].iloc[0]
        assert row["D"] == Fraction(7, 2)
        assert row["U_decimal"] == "6"

    @pytest.mark.parametrize("T,X_values,offset", [(1, range(2, 9), 1), (2, range(3, 8), 2)])
    def test_tradeoff_curves(self, T, X_values, offset):
        table = tradeoff_sweep(10, T, 1, 1, range(1, 11))
        assert list(table["X"]) == list(X_values)
        for _, row in table.iterrows():
            X = row["X"]
            assert row["U"] == Fraction(10, X - offset)
            assert row["D"] == Fraction(10, 10 - T - X)

    def test_tradeoff_balanced_row(self):
        table = tradeoff_sweep(10, 1, 1)
        best = table[table["balanced"]]
        assert list(best["X"]) == [5]

    def test_decimal_text(self):
        assert decimal_text(Fraction(210600, 70000)) == "3.008571"
        assert decimal_text(Fraction(7, 2)) == "3.5"
        assert decimal_text(Fraction(3)) == "3"

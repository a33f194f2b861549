import numpy as np
import pytest

from chargeplan.chain import (
    ChainState,
    ClassPars,
    DegenerateChainError,
    DomainError,
    StoragePars,
    blocking_probability,
    build_generator,
    build_state_space,
    constant_recharge,
    derived_recharge_rate,
    erlang_b,
    idle_power_recharge,
    steady_state,
)


def pars(lam, mu=2.0, slots=5, cap=5, nu=4.0):
    return ClassPars(lam, mu, slots, StoragePars(cap, nu))


class TestStateSpace:
    def test_hand_enumeration_s1_r1(self):
        space = build_state_space(1, 1)
        got = {(s.in_service, s.stored) for s in space.states}
        assert got == {(0, 0), (0, 1), (1, 0), (1, 1), (2, 0)}
        assert space.size == 5

    def test_count_closed_form_s5_r5(self):
        assert build_state_space(5, 5).size == 36 + 15

    def test_no_storage_is_plain_loss_system(self):
        space = build_state_space(3, 0)
        assert [(s.in_service, s.stored) for s in space.states] == [
            (0, 0), (1, 0), (2, 0), (3, 0),
        ]

    def test_count_formula_over_grid(self):
        for S in range(1, 16):
            for R in range(0, 16):
                space = build_state_space(S, R)
                assert space.size == (S + 1) * (R + 1) + R * (R + 1) // 2, (S, R)

    def test_index_is_bijection_and_ordering_lexicographic(self):
        space = build_state_space(4, 3)
        assert sorted(space.index.values()) == list(range(space.size))
        keys = [(s.in_service, s.stored) for s in space.states]
        assert keys == sorted(keys)

    def test_rejects_bad_dimensions(self):
        with pytest.raises(DomainError):
            build_state_space(0, 3)
        with pytest.raises(DomainError):
            build_state_space(3, -1)


class TestGenerator:
    def test_two_state_birth_death(self):
        p = pars(2.0, mu=2.0, slots=1, cap=0, nu=1.0)
        space = build_state_space(1, 0)
        gen = build_generator(p, space)
        assert np.allclose(gen.rates, [[-2.0, 2.0], [2.0, -2.0]])

    def test_bottom_right_diagonal_is_full_departure_rate(self):
        p = pars(3.0, mu=2.0, slots=4, cap=3)
        gen = build_generator(p, build_state_space(4, 3))
        last = gen.space.index[ChainState(7, 0)]
        assert gen.rates[last, last] == -(4 + 3) * 2.0

    def test_storage_admission_row(self):
        # from (1,1) with S=R=1: arrival reserves the stored charge, departure frees the slot
        p = ClassPars(1.0, 1.0, 1, StoragePars(1, 1.0))
        space = build_state_space(1, 1)
        gen = build_generator(p, space)
        i = space.index[ChainState(1, 1)]
        row = gen.rates[i]
        assert row[space.index[ChainState(2, 0)]] == 1.0
        assert row[space.index[ChainState(0, 1)]] == 1.0
        assert row[i] == -2.0
        assert row.sum() == 0.0

    def test_rows_sum_to_zero_offdiag_nonnegative(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            S = int(rng.integers(1, 9))
            R = int(rng.integers(0, 9))
            p = ClassPars(
                float(rng.uniform(0.1, 20)),
                float(rng.uniform(0.5, 4)),
                S,
                StoragePars(R, float(rng.uniform(0.5, 10))),
            )
            gen = build_generator(p, build_state_space(S, R))
            q = gen.rates
            off = q - np.diag(np.diag(q))
            assert (off >= 0).all()
            assert np.abs(q.sum(axis=1)).max() <= 1e-12

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(DomainError):
            build_generator(pars(1.0, slots=2, cap=2), build_state_space(3, 2))

    def test_no_recharge_when_all_slots_busy(self):
        p = pars(1.0, slots=2, cap=2)
        space = build_state_space(2, 2)
        gen = build_generator(p, space)
        i = space.index[ChainState(2, 1)]  # slots full, storage not full
        j = space.index[ChainState(2, 2)]
        assert gen.rates[i, j] == 0.0

    def test_idle_power_policy_caps_rate(self):
        p = ClassPars(1.0, 2.0, 4, StoragePars(5, 4.0, power_rating=2.0))
        space = build_state_space(4, 5)
        gen = build_generator(p, space, recharge_policy=idle_power_recharge)
        # 1 idle slot -> half the nominal rate; >=2 idle -> nominal
        assert gen.rates[space.index[ChainState(3, 0)], space.index[ChainState(3, 1)]] == 2.0
        assert gen.rates[space.index[ChainState(1, 0)], space.index[ChainState(1, 1)]] == 4.0


class TestSteadyState:
    def test_symmetric_two_state(self):
        p = pars(1.0, mu=1.0, slots=1, cap=0)
        ss = steady_state(build_generator(p, build_state_space(1, 0)))
        assert np.allclose(ss.probabilities, [0.5, 0.5], atol=1e-14)

    def test_analytic_birth_death(self):
        p = pars(1.0, mu=2.0, slots=1, cap=0)
        ss = steady_state(build_generator(p, build_state_space(1, 0)))
        assert np.allclose(ss.probabilities, [2 / 3, 1 / 3], atol=1e-14)

    def test_defining_equations_random_draws(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            S = int(rng.integers(1, 10))
            R = int(rng.integers(0, 10))
            p = ClassPars(
                float(rng.uniform(0.05, 25)),
                float(rng.uniform(0.5, 4)),
                S,
                StoragePars(R, float(rng.uniform(0.5, 10))),
            )
            gen = build_generator(p, build_state_space(S, R))
            ss = steady_state(gen)
            pi = ss.probabilities
            assert (pi >= 0).all()
            assert abs(pi.sum() - 1.0) <= 1e-12
            assert np.abs(pi @ gen.rates).max() <= 1e-10

    def test_blocking_states_are_full_and_empty(self):
        p = pars(2.0, slots=2, cap=2)
        ss = steady_state(build_generator(p, build_state_space(2, 2)))
        labels = {
            (s.in_service, s.stored)
            for i, s in enumerate(ss.space.states)
            if i in ss.blocking_states
        }
        assert labels == {(2, 0), (3, 0), (4, 0)}

    def test_degenerate_chain_signalled(self):
        p = ClassPars(0.0, 2.0, 2, StoragePars(2, 4.0))
        gen = build_generator(p, build_state_space(2, 2))
        with pytest.raises(DegenerateChainError):
            steady_state(gen)


class TestBlockingProbability:
    def test_zero_arrivals_zero_blocking(self):
        assert blocking_probability(pars(0.0)) == 0.0
        assert blocking_probability(pars(0.0, slots=1, cap=0)) == 0.0

    def test_erlang_degenerate_case(self):
        # R=0: exact agreement with the Erlang-B recursion at the offered load
        b = blocking_probability(pars(18.495, slots=5, cap=0, nu=1.0))
        assert b == pytest.approx(erlang_b(5, 18.495 / 2), abs=1e-9)
        # at offered load 9.25 the recursion gives 0.5353
        assert erlang_b(5, 9.25) == pytest.approx(0.5353, abs=1e-4)
        assert blocking_probability(
            pars(18.5, slots=5, cap=0, nu=1.0)
        ) == pytest.approx(0.5353, abs=1e-4)

    def test_erlang_equivalence_sweep(self):
        for S in range(1, 11):
            for load in (0.5, 1.0, 2.0, 5.0, 10.0, 20.0):
                p = ClassPars(load * 2.0, 2.0, S, StoragePars(0, 1.0))
                assert blocking_probability(p) == pytest.approx(
                    erlang_b(S, load), abs=1e-9
                ), (S, load)

    def test_storage_bracketing(self):
        p = pars(18.495)
        b = blocking_probability(p)
        assert erlang_b(10, 9.25) <= b <= erlang_b(5, 9.25)

    def test_monotone_in_each_parameter(self):
        base = dict(lam=6.0, mu=2.0, slots=4, cap=4, nu=4.0)

        def bp(**kw):
            d = {**base, **kw}
            return blocking_probability(
                ClassPars(d["lam"], d["mu"], d["slots"], StoragePars(d["cap"], d["nu"]))
            )

        for a, b in zip((2, 4, 6, 8), (4, 6, 8, 10)):
            assert bp(slots=b) <= bp(slots=a) + 1e-12
            assert bp(cap=b) <= bp(cap=a) + 1e-12
            assert bp(nu=float(b)) <= bp(nu=float(a)) + 1e-12
            assert bp(lam=float(b)) >= bp(lam=float(a)) - 1e-12


class TestErlangB:
    def test_single_server(self):
        assert erlang_b(1, 1.0) == pytest.approx(0.5, abs=1e-15)

    def test_no_load(self):
        assert erlang_b(7, 0.0) == 0.0

    def test_known_value(self):
        assert erlang_b(5, 9.25) == pytest.approx(0.5352570917189577, rel=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            erlang_b(0, 1.0)
        with pytest.raises(DomainError):
            erlang_b(3, -0.5)


class TestRechargeRateDerivation:
    def test_worked_example(self):
        fast = StoragePars(5, 1.0, efficiency=0.9, power_rating=2.0)
        assert derived_recharge_rate(2.0, fast) == pytest.approx(4.0)

    def test_reference_scaling(self):
        st = StoragePars(5, 1.0, efficiency=0.95, power_rating=2.0)
        assert derived_recharge_rate(2.0, st, reference_efficiency=1.0) == pytest.approx(3.8)

    def test_invalid_reference(self):
        with pytest.raises(DomainError):
            derived_recharge_rate(2.0, StoragePars(5, 1.0), reference_efficiency=0.0)


class TestParameterValidation:
    def test_storage_domain(self):
        with pytest.raises(DomainError):
            StoragePars(-1, 1.0)
        with pytest.raises(DomainError):
            StoragePars(3, 0.0)
        with pytest.raises(DomainError):
            StoragePars(3, 1.0, efficiency=1.5)
        with pytest.raises(DomainError):
            StoragePars(3, 1.0, power_rating=0.0)
        StoragePars(0, 0.0)  # no storage: recharge rate unconstrained

    def test_class_domain(self):
        st = StoragePars(2, 1.0)
        with pytest.raises(DomainError):
            ClassPars(-1.0, 2.0, 3, st)
        with pytest.raises(DomainError):
            ClassPars(1.0, 0.0, 3, st)
        with pytest.raises(DomainError):
            ClassPars(1.0, 2.0, 0, st)

    def test_constant_policy_is_default(self):
        p = pars(2.0)
        assert constant_recharge(3, p) == 4.0

import logging
import math

import numpy as np
import pytest

from gridloc import (
    ABOVE_CANOPY_MODEL,
    BELOW_CANOPY_MODEL,
    GridField,
    LocationPmf,
    PathLossModel,
    Scenario,
    build_likelihood,
    delta_pmf,
    mean_path_loss,
    uniform_pmf,
)
from gridloc.config import ScenarioConfig, build_scenario
from gridloc.deployment import make_nodes
from gridloc.engine import (
    advertise_landmarks,
    beacon_refresh,
    decide,
    init_state,
    rrep_return,
    rreq_flood,
    run,
    snapshot,
    update_posterior,
)


def scenario_from_positions(lm_pos, unk_pos, side=300.0, range_node=60.0,
                            range_lm=60.0, seed=0, hop_limit=8):
    f = GridField(side, 30.0)
    nodes = make_nodes(f, lm_pos, unk_pos, 15.0, 15.0)
    return Scenario(field=f, model_node=BELOW_CANOPY_MODEL,
                    model_landmark=ABOVE_CANOPY_MODEL, nodes=nodes,
                    range_node_m=range_node, range_landmark_m=range_lm,
                    seed=seed, hop_limit=hop_limit)


def bfs_hops(neighbors, source):
    hops = {source: 0}
    frontier = [source]
    while frontier:
        nxt = []
        for s in frontier:
            for u in neighbors[s]:
                u = int(u)
                if u not in hops:
                    hops[u] = hops[s] + 1
                    nxt.append(u)
        frontier = nxt
    return hops


class TestUpdatePosterior:
    def feasible_messages(self, field, model, table, rng, count):
        msgs = []
        n = field.n_cells
        for _ in range(count):
            nb = LocationPmf(field, rng.random(n) + 1e-3).normalize()
            d = table.class_distances[int(rng.integers(table.n_classes))]
            pl = mean_path_loss(model, d) + rng.normal(0, model.sigma_db)
            msgs.append((nb, pl))
        return msgs

    def test_empty_messages_return_prior(self, field_m4, below):
        table = build_likelihood(field_m4, below)
        prior = LocationPmf(field_m4, np.arange(1.0, 17.0)).normalize()
        out = update_posterior(prior, [], table)
        assert np.array_equal(out.values, prior.values)
        assert out is not prior

    def test_delta_neighbor_reduces_to_likelihood_product(self, field_m4, below):
        table = build_likelihood(field_m4, below)
        pl = mean_path_loss(below, 42.0)
        post = update_posterior(uniform_pmf(field_m4), [(delta_pmf(field_m4, 5), pl)], table)
        direct = np.array([table.lookup(5, xj, pl) for xj in range(1, 17)])
        direct /= direct.sum()
        assert np.abs(post.values - direct).max() <= 1e-12

    def test_matches_brute_force_on_small_grids(self):
        rng = np.random.default_rng(7)
        for _ in range(150):
            m = int(rng.integers(2, 4))
            f = GridField(m * 30.0, 30.0)
            n = m * m
            model = PathLossModel(rng.uniform(40, 90), rng.uniform(1.5, 5.0),
                                  rng.uniform(2.0, 9.0))
            table = build_likelihood(f, model)
            prior = LocationPmf(f, rng.random(n) + 1e-3).normalize()
            msgs = self.feasible_messages(f, model, table, rng, int(rng.integers(1, 4)))
            post = update_posterior(prior, msgs, table)
            expected = prior.values.copy()
            for nb, pl in msgs:
                factor = np.array([
                    math.fsum(table.lookup(xi, xj, pl) * nb.values[xi - 1]
                              for xi in range(1, n + 1))
                    for xj in range(1, n + 1)
                ])
                expected *= factor
            total = expected.sum()
            if total > 0:
                assert np.abs(post.values - expected / total).max() <= 1e-12
            else:
                assert np.array_equal(post.values, prior.values)

    def test_two_messages_not_sequential_with_refreshed_priors(self, field_m4, below):
        # the product form fixes neighbor priors; refreshing them mid-update differs
        table = build_likelihood(field_m4, below)
        rng = np.random.default_rng(3)
        prior = uniform_pmf(field_m4)
        msgs = self.feasible_messages(field_m4, below, table, rng, 2)
        joint = update_posterior(prior, msgs, table)
        seq = update_posterior(update_posterior(prior, [msgs[0]], table), [msgs[1]], table)
        assert np.abs(joint.values - seq.values).max() <= 1e-12

    def test_permutation_invariance(self, field_m4, below):
        table = build_likelihood(field_m4, below)
        rng = np.random.default_rng(4)
        prior = LocationPmf(field_m4, rng.random(16) + 1e-3).normalize()
        msgs = self.feasible_messages(field_m4, below, table, rng, 3)
        a = update_posterior(prior, msgs, table)
        b = update_posterior(prior, msgs[::-1], table)
        assert np.abs(a.values - b.values).max() <= 1e-12

    def test_support_shrinkage(self, field_m4, below):
        table = build_likelihood(field_m4, below)
        rng = np.random.default_rng(5)
        values = rng.random(16)
        values[[2, 7, 11]] = 0.0
        prior = LocationPmf(field_m4, values).normalize()
        msgs = self.feasible_messages(field_m4, below, table, rng, 2)
        post = update_posterior(prior, msgs, table)
        assert np.all(post.values[[2, 7, 11]] == 0.0)

    def test_posterior_normalized(self, field_m4, below):
        table = build_likelihood(field_m4, below)
        rng = np.random.default_rng(6)
        prior = LocationPmf(field_m4, rng.random(16) + 1e-3).normalize()
        msgs = self.feasible_messages(field_m4, below, table, rng, 2)
        assert abs(update_posterior(prior, msgs, table).sum() - 1.0) <= 1e-9

    def test_annihilated_posterior_falls_back_to_prior(self, field_m4, caplog):
        model = PathLossModel(75.0, 3.61, 0.5)  # narrow bands: easy to miss every bin
        table = build_likelihood(field_m4, model)
        prior = uniform_pmf(field_m4)
        msg = [(delta_pmf(field_m4, 1), 500.0)]
        with caplog.at_level(logging.WARNING, logger="gridloc.engine"):
            out = update_posterior(prior, msg, table)
        assert np.array_equal(out.values, prior.values)
        assert any("annihilated" in r.message for r in caplog.records)


class TestDecide:
    def test_delta(self, field_m4):
        assert decide(delta_pmf(field_m4, 9)) == 9

    def test_uniform_tie_breaks_to_first_cell(self, field_m4):
        assert decide(uniform_pmf(field_m4)) == 1

    def test_plain_argmax(self, field_m2):
        assert decide(LocationPmf(field_m2, [0.1, 0.5, 0.2, 0.2])) == 2


class TestAdvertisement:
    def test_isolated_node_stays_uniform_with_hop_limit_zero(self):
        # unknown 2 is adjacent only to unknown 1; no forwarding at hop limit 0
        sc = scenario_from_positions([(10, 10)], [(60, 10), (110, 10)],
                                     range_lm=60.0, range_node=60.0, hop_limit=0)
        st = init_state(sc)
        advertise_landmarks(st)
        assert np.array_equal(st.pmf_of(2).values, uniform_pmf(sc.field).values)
        assert st.pmf_of(1).entropy() < uniform_pmf(sc.field).entropy()

    def test_disconnected_node_flagged(self):
        sc = scenario_from_positions([(10, 10)], [(40, 10), (290, 290)],
                                     range_lm=60.0, range_node=60.0)
        st = init_state(sc)
        advertise_landmarks(st)
        assert st.uncovered_unknowns == {2}
        assert np.array_equal(st.pmf_of(2).values, uniform_pmf(sc.field).values)

    def test_single_landmark_posterior_is_distance_ring(self):
        # small shadowing: support concentrates on cells whose centroid distance
        # to the landmark matches the noise-free inversion of the drawn sample
        model = PathLossModel(72.0, 2.91, 0.3)
        f = GridField(450.0, 30.0)
        nodes = make_nodes(f, [(225.0, 225.0)], [(330.0, 225.0)], 15.0, 15.0)
        sc = Scenario(field=f, model_node=model, model_landmark=model,
                      nodes=nodes, range_node_m=200.0, range_landmark_m=200.0, seed=12)
        st = init_state(sc)
        advertise_landmarks(st)
        assert len(st.samples) == 1
        pl = st.samples[0].pl_db
        d_star = model.d0_m * 10 ** ((pl - model.pl0_db) / (10 * model.n))
        band = 10 ** ((3 * model.sigma_db + 0.51) / (10 * model.n))
        lm_centroid = np.array(f.cell_centroid(f.position_to_cell((225.0, 225.0))))
        cents = f.centroids()
        support = np.flatnonzero(st.pmf_of(1).values > 0)
        dists = np.hypot(*(cents[support] - lm_centroid).T)
        dists = np.maximum(dists, f.cell_size_m / 2)
        assert np.all(dists >= d_star / band) and np.all(dists <= d_star * band)
        # the ring is not a single cell: it wraps around the landmark
        assert len(support) >= 8

    def test_all_pmfs_normalized_after_advertisement(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=7.0, landmark_count=6, seed=3)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng)
        advertise_landmarks(st)
        for u in sc.unknown_ids:
            assert abs(st.pmf_of(u).sum() - 1.0) <= 1e-9

    def test_advertisement_runs_once(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=3.0, landmark_count=4, seed=3)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng)
        advertise_landmarks(st)
        with pytest.raises(ValueError):
            advertise_landmarks(st)

    def test_entropy_drops_after_advertisement(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=3.0, landmark_count=6, seed=19)
        entropies = []
        for trial in range(100):
            sc, rng = build_scenario(cfg, trial)
            st = init_state(sc, rng)
            advertise_landmarks(st)
            entropies.append(snapshot(st, 0).entropies.mean())
        assert np.mean(entropies) < math.log(sc.field.n_cells)


class TestRreqFlood:
    def test_chain_trace(self):
        sc = scenario_from_positions([(10, 10)], [(60, 10), (110, 10)],
                                     range_lm=60.0, range_node=60.0)
        st = init_state(sc)
        st.advertised = True  # isolate the flood
        before = st.pmf_of(1).values.copy()
        _, event = rreq_flood(st, 2)
        assert event.route == [0, 1, 2]
        assert event.hops == {2: 0, 1: 1, 0: 2}
        assert not np.array_equal(st.pmf_of(1).values, before)  # A heard B
        assert st.step_k == 1

    def test_diamond_duplicate_suppression(self):
        # S(1)-A(2), S-B(3), A-C(4), B-C; landmark 0 unreachable
        sc = scenario_from_positions(
            [(290, 290)], [(10, 50), (50, 10), (50, 90), (90, 50)],
            range_lm=5.0, range_node=60.0)
        st = init_state(sc)
        st.advertised = True
        _, event = rreq_flood(st, 1)
        assert event.route is None
        assert event.deliveries == 8  # every heard packet is applied once
        received = {}
        forwarded = set()
        for rec in st.samples:
            received[rec.receiver] = received.get(rec.receiver, 0) + 1
            forwarded.add(rec.sender)
        assert received == {1: 2, 2: 2, 3: 2, 4: 2}  # C hears A and B; each once
        assert forwarded == {1, 2, 3, 4}  # everyone forwards exactly once

    def test_step_counter_and_sample_log_growth(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=3.0, landmark_count=4, seed=5)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng)
        advertise_landmarks(st)
        n0 = st.sample_count
        _, event = rreq_flood(st, sc.unknown_ids[0])
        assert st.step_k == 1
        assert st.sample_count - n0 == event.deliveries

    def test_landmark_source_rejected(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=3.0, landmark_count=4, seed=5)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng)
        with pytest.raises(ValueError):
            rreq_flood(st, 0)

    def test_hops_match_bfs_oracle(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=7.0, landmark_count=4, seed=23)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng)
        st.advertised = True
        source = sc.unknown_ids[0]
        _, event = rreq_flood(st, source)
        # landmarks do not forward: BFS oracle runs on unknown-only edges,
        # then landmarks attach at (min neighbor hop) + 1
        lm = st._is_landmark
        unknown_adj = {u: [int(v) for v in st.graph.neighbors[u] if not lm[v]]
                       for u in sc.unknown_ids}
        oracle = bfs_hops(unknown_adj, source)
        for u in sc.unknown_ids:
            if u in oracle:
                assert event.hops[u] == oracle[u]
        for l in sc.landmark_ids:
            nbrs = [int(v) for v in st.graph.neighbors[l] if not lm[v] and int(v) in oracle]
            if nbrs:
                assert event.landmark_hops[l] == min(oracle[v] for v in nbrs) + 1


class TestRrepReturn:
    def test_two_pair_chain_updates(self):
        sc = scenario_from_positions([(10, 10)], [(60, 10), (110, 10)],
                                     range_lm=60.0, range_node=60.0)
        st = init_state(sc)
        st.advertised = True
        _, event = rreq_flood(st, 2)
        a_before = st.pmf_of(1).values.copy()
        b_before = st.pmf_of(2).values.copy()
        n0 = st.sample_count
        rrep_return(st, event)
        assert st.sample_count - n0 == 2  # (L,A) then (A,B)
        assert not np.array_equal(st.pmf_of(1).values, a_before)
        assert not np.array_equal(st.pmf_of(2).values, b_before)

    def test_off_route_nodes_bit_identical(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=7.0, landmark_count=4, seed=31)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng)
        advertise_landmarks(st)
        _, event = rreq_flood(st, sc.unknown_ids[3])
        on_routes = set().union(*event.routes)
        before = {u: st.pmf_of(u).values.copy() for u in sc.unknown_ids}
        rrep_return(st, event)
        for u in sc.unknown_ids:
            if u not in on_routes:
                assert np.array_equal(st.pmf_of(u).values, before[u])

    def test_primary_route_is_min_hop_lowest_id(self):
        cfg = ScenarioConfig(field_ha=20.0, density_per_ha=7.0, landmark_count=8, seed=13)
        for trial in range(5):
            sc, rng = build_scenario(cfg, trial)
            st = init_state(sc, rng)
            st.advertised = True
            source = sc.unknown_ids[trial]
            _, event = rreq_flood(st, source)
            if not event.landmark_hops:
                continue
            best_hop = min(event.landmark_hops.values())
            expected = min(l for l, h in event.landmark_hops.items() if h == best_hop)
            assert event.route[0] == expected
            assert len(event.route) - 1 == event.landmark_hops[expected]
            assert event.route[-1] == source
            # every reached landmark replies, closest (then lowest id) first
            assert [r[0] for r in event.routes] == sorted(
                event.landmark_hops, key=lambda l: (event.landmark_hops[l], l))

    def test_no_route_is_noop(self):
        sc = scenario_from_positions([(290, 290)], [(10, 10), (50, 10)],
                                     range_lm=5.0, range_node=60.0)
        st = init_state(sc)
        st.advertised = True
        _, event = rreq_flood(st, 1)
        before = [st.pmf_of(u).values.copy() for u in (1, 2)]
        rrep_return(st, event)
        assert event.route is None
        for u, prev in zip((1, 2), before):
            assert np.array_equal(st.pmf_of(u).values, prev)


class TestRun:
    def test_zero_steps_decides_from_advertisement(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=3.0, landmark_count=4, seed=5)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng)
        records = run(st, 0)
        assert len(records) == 1
        assert records[0].round_index == 0

    def test_identical_seeds_identical_trajectories(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=3.0, landmark_count=6, seed=9)
        runs = []
        for _ in range(2):
            sc, rng = build_scenario(cfg, 0)
            st = init_state(sc, rng)
            recs = run(st, 5)
            runs.append([(r.decided_cells.copy(), r.entropies.copy()) for r in recs])
        for (d1, e1), (d2, e2) in zip(*runs):
            assert np.array_equal(d1, d2)
            assert np.array_equal(e1, e2)

    def test_explicit_source_sequence(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=3.0, landmark_count=4, seed=5)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng)
        sources = sc.unknown_ids[:3]
        records = run(st, 3, sources=sources)
        assert len(records) == 4
        with pytest.raises(ValueError):
            sc2, rng2 = build_scenario(cfg, 0)
            run(init_state(sc2, rng2), 3, sources=sources[:1])

    def test_landmark_pmfs_immutable_through_run(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=7.0, landmark_count=6, seed=2)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng)
        deltas = [st.pmf_of(l).values.copy() for l in sc.landmark_ids]
        run(st, 4)
        for l, before in zip(sc.landmark_ids, deltas):
            assert np.array_equal(st.pmf_of(l).values, before)

    def test_all_posteriors_normalized_every_round(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=3.0, landmark_count=4, seed=4)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng)
        advertise_landmarks(st)
        for r in range(3):
            _, ev = rreq_flood(st, sc.unknown_ids[r % len(sc.unknown_ids)])
            rrep_return(st, ev)
            beacon_refresh(st)
            for u in sc.unknown_ids:
                assert abs(st.pmf_of(u).sum() - 1.0) <= 1e-9

    def test_codec_mode_runs_and_stays_valid(self):
        cfg = ScenarioConfig(field_ha=6.0, density_per_ha=3.0, landmark_count=6, seed=9)
        sc, rng = build_scenario(cfg, 0)
        st = init_state(sc, rng, codec_payload=102)
        records = run(st, 3)
        assert len(records) == 4
        for u in sc.unknown_ids:
            assert abs(st.pmf_of(u).sum() - 1.0) <= 1e-9

"""Recursive Bayesian location updates over a flood-and-reply message schedule.

Every received packet carries the sender's current location pmf; the
receiver draws one shadowed path loss sample for the true inter-node
distance and multiplies its belief by the evidence factor

    factor(x_j) = sum over x_i of P(pl | cells x_j, x_i) * sender_pmf(x_i),

then renormalizes (an all-zero product keeps the prior: degenerate
evidence from the truncated likelihood).

Schedule. Landmarks advertise once, in id order: each advertisement floods
outward breadth-first; direct neighbors sample the landmark itself, nodes
covered at the second hop combine one message from every adjacent
first-hop forwarder, and every node covered beyond the first hop also
refreshes its own landmark links (gateways beacon continuously, so those
samples are always available). Deeper relays forward for coverage but
contribute no pmf messages: relayed mixtures of mixtures carry almost no
position information while their shared ancestry badly violates the
independence behind the product update, and letting them multiply in
collapses beliefs onto confident wrong cells.

Each subsequent time step, one random unknown node floods a route request:
every multicast is heard by all connected neighbors (one message per
delivered packet), each node forwards at most once while its hop count
allows, and every landmark the flood reaches replies along its reverse
minimum-hop route, with the pairwise update applied hop by hop. The step
ends with a beacon refresh: every unknown node re-samples its connected
landmarks. These repeated anchor measurements are what keeps the relative
(node-to-node) consensus from drifting away from the ground truth.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import codec
from .channel import LikelihoodTable, build_likelihood, mean_path_loss
from .deployment import ConnectivityGraph, NodeRole, Scenario, build_connectivity
from .grid import LocationPmf, delta_pmf, uniform_pmf

logger = logging.getLogger(__name__)

# Guards the log-distance law against coincident node positions.
MIN_SAMPLE_DISTANCE_M = 1e-3

# The engine widens the likelihood truncation beyond the tabulated default:
# at +/-3 sigma roughly one sample in 370 annihilates the receiver's true
# cell, an unrecoverable error under product updates. Five sigma makes that
# a non-event while leaving the in-band bin masses essentially unchanged.
ENGINE_SPAN_SIGMAS = 5.0

# Landmark-link refreshes drawn when an advertisement covers a node beyond
# the first hop (beacons repeat during the network formation stage).
ADVERT_BEACON_DRAWS = 2

# Landmark-link samples drawn per beacon refresh at the end of each step. A
# flood occupies many radio slots, so several beacon receptions per flood is
# conservative; the repeated anchor evidence also keeps borderline cell
# decisions pinned by the (lossless) gateway links rather than by compressed
# neighbor messages.
BEACON_REFRESH_DRAWS = 5


@dataclass
class SampleRecord:
    """One communicated path loss sample: step index, sender, receiver, value."""

    step: int
    sender: int
    receiver: int
    pl_db: float


@dataclass
class FloodEvent:
    """Bookkeeping of one route-request flood."""

    source: int
    hops: dict[int, int]
    parents: dict[int, int]
    landmark_hops: dict[int, int]
    route: list[int] | None
    routes: list[list[int]]
    deliveries: int

    @property
    def visited(self) -> set[int]:
        return set(self.hops)


@dataclass
class RoundRecord:
    """Snapshot of the unknown-node beliefs after one schedule round."""

    round_index: int
    unknown_ids: tuple[int, ...]
    decided_cells: np.ndarray
    entropies: np.ndarray


@dataclass
class SimState:
    """Mutable simulation state for one run."""

    scenario: Scenario
    graph: ConnectivityGraph
    node_table: LikelihoodTable
    landmark_table: LikelihoodTable
    rng: np.random.Generator
    step_k: int = 0
    advertised: bool = False
    samples: list[SampleRecord] = field(default_factory=list)
    sample_count: int = 0
    log_samples: bool = True
    codec_payload: int | None = None
    fallback_count: int = 0
    uncovered_unknowns: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        self._positions = self.scenario.positions()
        self._is_landmark = np.array(
            [n.role is NodeRole.LANDMARK for n in self.scenario.nodes]
        )
        self._landmark_cells = {
            n.id: self.scenario.field.position_to_cell(n.true_position)
            for n in self.scenario.nodes if n.role is NodeRole.LANDMARK
        }

    def pmf_of(self, node_id: int) -> LocationPmf:
        return self.scenario.nodes[node_id].pmf

    def landmark_neighbors(self, node_id: int) -> list[int]:
        nbrs = self.graph.neighbors[node_id]
        return [int(x) for x in nbrs[self._is_landmark[nbrs]]]


def init_state(scenario: Scenario, rng: np.random.Generator | None = None, *,
               log_samples: bool = True, codec_payload: int | None = None,
               span_sigmas: float = ENGINE_SPAN_SIGMAS) -> SimState:
    """Fresh state: landmark pmfs reset to deltas, unknowns to uniform."""
    fld = scenario.field
    for node in scenario.nodes:
        if node.role is NodeRole.LANDMARK:
            node.pmf = delta_pmf(fld, fld.position_to_cell(node.true_position))
        else:
            node.pmf = uniform_pmf(fld)
    return SimState(
        scenario=scenario,
        graph=build_connectivity(scenario),
        node_table=build_likelihood(fld, scenario.model_node, span_sigmas=span_sigmas),
        landmark_table=build_likelihood(fld, scenario.model_landmark,
                                        span_sigmas=span_sigmas),
        rng=rng if rng is not None else np.random.default_rng(scenario.seed),
        log_samples=log_samples,
        codec_payload=codec_payload,
    )


def decide(pmf: LocationPmf) -> int:
    """Most probable cell; ties break toward the lowest index."""
    return int(np.argmax(pmf.values)) + 1


def update_posterior(prior_j: LocationPmf,
                     messages: list[tuple[LocationPmf, float]],
                     table: LikelihoodTable) -> LocationPmf:
    """Multiply the prior by one evidence factor per (neighbor pmf, sample) message.

    An empty message list returns the prior unchanged. If the truncated
    likelihood annihilates the posterior entirely, the prior is kept and a
    warning logged (degenerate evidence).
    """
    if not messages:
        return prior_j.copy()
    post = prior_j.values.copy()
    for neighbor_pmf, pl in messages:
        post *= table.factor(pl, neighbor_pmf.values)
    total = post.sum()
    if not total > 0 or not np.isfinite(total):
        logger.warning("posterior annihilated by degenerate evidence; keeping prior")
        return prior_j.copy()
    return LocationPmf(prior_j.field, post / total)


def _message_values(state: SimState, sender_id: int) -> np.ndarray:
    """Sender pmf as receivers see it: unknown-node pmfs pass through the codec.

    Landmark messages stay exact: a delta pmf is just a cell id on the air,
    so transform coding it would only add error.
    """
    node = state.scenario.nodes[sender_id]
    if state.codec_payload is not None and node.role is NodeRole.UNKNOWN:
        return codec.roundtrip(node.pmf, state.codec_payload).values
    return node.pmf.values


def _record(state: SimState, senders, receiver_or_receivers, pls) -> None:
    state.sample_count += len(pls)
    if not state.log_samples:
        return
    if np.isscalar(receiver_or_receivers) or isinstance(receiver_or_receivers, int):
        pairs = ((int(s), int(receiver_or_receivers)) for s in senders)
    else:
        pairs = ((int(senders), int(r)) for r in receiver_or_receivers)
    state.samples.extend(
        SampleRecord(state.step_k, s, r, float(pl))
        for (s, r), pl in zip(pairs, pls)
    )


def _draw_samples(state: SimState, node_id: int, others: np.ndarray,
                  model) -> np.ndarray:
    d = np.hypot(*(state._positions[others] - state._positions[node_id]).T)
    d = np.maximum(d, MIN_SAMPLE_DISTANCE_M)
    return state.rng.normal(mean_path_loss(model, d), model.sigma_db)


def _store_posterior(state: SimState, receiver: int, post: np.ndarray) -> None:
    total = post.sum()
    if total > 0 and np.isfinite(total):
        state.scenario.nodes[receiver].pmf.values[:] = post / total
    else:
        state.fallback_count += 1
        logger.debug("node %d kept prior: evidence outside likelihood support", receiver)


def _apply_messages(state: SimState, receiver: int, senders: list[int],
                    table: LikelihoodTable,
                    pooled: dict[int, np.ndarray] | None = None) -> None:
    """One product update at `receiver` with a fresh sample per listed sender."""
    senders_arr = np.asarray(senders)
    pls = _draw_samples(state, receiver, senders_arr, table.model)
    mass = table.mass_matrix(pls)
    post = state.scenario.nodes[receiver].pmf.values.copy()
    for k, s in enumerate(senders):
        if state._is_landmark[s]:
            post *= mass[k, table.class_matrix[:, state._landmark_cells[s] - 1]]
        else:
            if pooled is None:
                post *= table.pooled(_message_values(state, s)) @ mass[k]
            else:
                if s not in pooled:
                    pooled[s] = table.pooled(_message_values(state, s))
                post *= pooled[s] @ mass[k]
    _store_posterior(state, receiver, post)
    _record(state, senders, receiver, pls)


def _deliver_multicast(state: SimState, sender: int, receivers: np.ndarray,
                       table: LikelihoodTable) -> int:
    """One multicast: every listed unknown receiver samples and updates.

    Receivers are processed in ascending id order with one vector of channel
    draws, and all share the sender's current pmf message.
    """
    if len(receivers) == 0:
        return 0
    pls = _draw_samples(state, sender, receivers, table.model)
    mass = table.mass_matrix(pls)
    if state._is_landmark[sender]:
        factors = mass[:, table.class_matrix[:, state._landmark_cells[sender] - 1]]
    else:
        factors = mass @ table.pooled(_message_values(state, sender)).T
    nodes = state.scenario.nodes
    current = np.stack([nodes[r].pmf.values for r in receivers])
    post = current * factors
    totals = post.sum(axis=1)
    for i, r in enumerate(receivers):
        if totals[i] > 0 and np.isfinite(totals[i]):
            nodes[r].pmf.values[:] = post[i] / totals[i]
        else:
            state.fallback_count += 1
            logger.debug("node %d kept prior: evidence outside likelihood support", r)
    _record(state, sender, receivers, pls)
    return len(receivers)


def advertise_landmarks(state: SimState) -> SimState:
    """Initial epoch: each landmark (in id order) floods its position once.

    Per landmark flood: direct neighbors apply the landmark's sample;
    second-hop nodes combine one message per adjacent first-hop forwarder;
    nodes covered past the first hop also redraw their own landmark links
    (ADVERT_BEACON_DRAWS rounds of beacon samples). Deeper coverage relays
    the packet without pmf messages. Unknown nodes that no advertisement
    reaches stay uniform and are flagged in state.uncovered_unknowns.
    """
    if state.advertised or state.step_k != 0:
        raise ValueError("advertisement must run once, before any flood step")
    lm = state._is_landmark
    hop_limit = state.scenario.hop_limit
    covered_any: set[int] = set()
    landmark_ids = [int(l) for l in np.flatnonzero(lm)]

    for lm_id in state.scenario.landmark_ids:
        covered = {lm_id, *landmark_ids}
        frontier = [lm_id]
        layer = 0
        while frontier:
            layer += 1
            table = state.landmark_table if layer == 1 else state.node_table
            arrivals: dict[int, list[int]] = {}
            for s in frontier:
                for u in state.graph.neighbors[s]:
                    u = int(u)
                    if u not in covered:
                        arrivals.setdefault(u, []).append(s)
            reached = sorted(arrivals)
            covered.update(reached)
            covered_any.update(reached)
            pooled: dict[int, np.ndarray] = {}
            for u in reached:
                if layer == 1:
                    _apply_messages(state, u, [lm_id], table, pooled)
                elif layer == 2:
                    _apply_messages(state, u, sorted(arrivals[u]), table, pooled)
                if layer > 1:
                    anchors = state.landmark_neighbors(u)
                    for _ in range(ADVERT_BEACON_DRAWS):
                        if anchors:
                            _apply_messages(state, u, anchors,
                                            state.landmark_table, pooled)
            frontier = reached if layer < hop_limit else []

    state.uncovered_unknowns = frozenset(set(state.scenario.unknown_ids) - covered_any)
    state.advertised = True
    if state.uncovered_unknowns:
        logger.info("%d unknown nodes unreachable by any advertisement",
                    len(state.uncovered_unknowns))
    return state


def rreq_flood(state: SimState, source: int) -> tuple[SimState, FloodEvent]:
    """One route-request flood from an unknown source; advances the step index.

    Every multicast delivers one message to each connected unknown neighbor
    (applied immediately); nodes forward at most once, while their hop count
    is below the hop limit. Landmarks absorb the packet: their first contact
    fixes the reply route for that landmark.
    """
    if state._is_landmark[source]:
        raise ValueError(f"flood source {source} must be an unknown node")
    state.step_k += 1
    lm = state._is_landmark
    hop_limit = state.scenario.hop_limit
    hops: dict[int, int] = {source: 0}
    parents: dict[int, int] = {}
    landmark_hops: dict[int, int] = {}
    queue: deque[int] = deque([source])
    enqueued = {source}
    deliveries = 0

    while queue:
        sender = queue.popleft()
        next_hop = hops[sender] + 1
        table = state.landmark_table if lm[sender] else state.node_table
        nbrs = state.graph.neighbors[sender]
        for l in nbrs[lm[nbrs]]:
            l = int(l)
            if l not in hops:
                hops[l] = next_hop
                parents[l] = sender
                landmark_hops[l] = next_hop
        unknown_recv = nbrs[~lm[nbrs]]
        deliveries += _deliver_multicast(state, sender, unknown_recv, table)
        for u in unknown_recv:
            u = int(u)
            if u not in hops:
                hops[u] = next_hop
                parents[u] = sender
            if u not in enqueued and hops[u] < hop_limit:
                enqueued.add(u)
                queue.append(u)

    routes = []
    for l in sorted(landmark_hops, key=lambda l: (landmark_hops[l], l)):
        route = [l]
        while route[-1] != source:
            route.append(parents[route[-1]])
        routes.append(route)
    event = FloodEvent(
        source=source, hops=hops, parents=parents, landmark_hops=landmark_hops,
        route=routes[0] if routes else None, routes=routes, deliveries=deliveries,
    )
    return state, event


def rrep_return(state: SimState, flood: FloodEvent) -> SimState:
    """Route replies: pairwise updates along each reached landmark's reverse route.

    The minimum-hop landmark (lowest id on ties) replies first; every other
    reached landmark replies in the same (hop count, id) order. Each
    consecutive (sender, receiver) pair on a route draws a fresh sample;
    nodes off all routes are untouched. Without a route the state is
    returned unchanged.
    """
    for route in flood.routes:
        for sender, receiver in zip(route, route[1:]):
            table = (state.landmark_table if state._is_landmark[sender]
                     else state.node_table)
            _apply_messages(state, receiver, [sender], table)
    return state


def beacon_refresh(state: SimState, draws: int = BEACON_REFRESH_DRAWS) -> SimState:
    """Every unknown node re-samples each connected landmark `draws` times."""
    for u in state.scenario.unknown_ids:
        anchors = state.landmark_neighbors(u)
        if anchors:
            _apply_messages(state, u, anchors * draws, state.landmark_table)
    return state


def snapshot(state: SimState, round_index: int) -> RoundRecord:
    """Decisions and entropies of all unknown nodes."""
    ids = tuple(state.scenario.unknown_ids)
    pmfs = np.stack([state.scenario.nodes[u].pmf.values for u in ids])
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(pmfs > 0, pmfs * np.log(pmfs), 0.0)
    return RoundRecord(
        round_index=round_index,
        unknown_ids=ids,
        decided_cells=np.argmax(pmfs, axis=1) + 1,
        entropies=-plogp.sum(axis=1),
    )


def run(state: SimState, steps: int, sources: list[int] | None = None) -> list[RoundRecord]:
    """Advertise once, then `steps` rounds of flood + replies + beacon refresh.

    Sources default to uniform seeded draws over the unknown nodes; an
    explicit list pins the flood origins instead. Snapshot 0 follows the
    advertisement epoch; snapshot r follows round r.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if sources is not None and len(sources) < steps:
        raise ValueError(f"need {steps} sources, got {len(sources)}")
    advertise_landmarks(state)
    records = [snapshot(state, 0)]
    unknown_ids = state.scenario.unknown_ids
    for r in range(1, steps + 1):
        if sources is None:
            source = unknown_ids[int(state.rng.integers(len(unknown_ids)))]
        else:
            source = sources[r - 1]
        _, event = rreq_flood(state, source)
        rrep_return(state, event)
        beacon_refresh(state)
        records.append(snapshot(state, r))
    return records

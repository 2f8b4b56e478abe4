"""Pure-Python simulation core.

Mirrors ``_csim.pyx`` event for event: both cores schedule the same events
in the same order and draw the same random numbers, so their outputs are
byte-identical.  This one favours readability and serves as the fallback
when the compiled extension is unavailable.
"""
from __future__ import annotations

import math
from bisect import bisect_right, insort
from collections import deque

import numpy as np

from . import qlearn, routing
from .engine import (ContractViolation, DeadlockError, EventKind, EventQueue,
                     RngStream, SimulationSummary)
from .router import INTER_NONE, INTER_PENDING, Packet
from .topology import GLOBAL, HOST
from .traffic import pick_destination

GEN = EventKind.PACKET_GEN
ARRIVE = EventKind.LINK_ARRIVAL
TRY = EventKind.TRY_FORWARD
CREDIT = EventKind.CREDIT_RETURN
FEEDBACK = EventKind.FEEDBACK_ARRIVAL
TICK = EventKind.METRICS_TICK
LOAD = EventKind.LOAD_CHANGE
NODE_CREDIT = EventKind.NODE_CREDIT
NODE_SEND = EventKind.NODE_SEND
DELIVER = EventKind.DELIVER


def _rng_from_state(state):
    rng = RngStream.__new__(RngStream)
    rng.state = state
    return rng


class Simulator:
    backend = "python"

    def __init__(self, setup):
        self.s = setup
        topo = self.topo = setup.topo
        p, a, k, m = topo.p, topo.a, topo.k, topo.m
        self.p, self.a, self.k = p, a, k
        alg = setup.algorithm
        self.tag = alg.tag
        self.V = V = alg.vc_count
        self.cap = setup.vc_buffer
        self.hop_cap = alg.hop_cap
        self.bias = alg.bias
        self.maxq = alg.maxq
        self.hp = setup.hp
        t = self.timing = setup.timing
        self.ser = t.serialization_ns
        self.rlat = t.router_latency_ns
        self.lat = [t.link_latency(int(kd)) for kd in topo.port_kind]
        self.is_global = [int(kd) == GLOBAL for kd in topo.port_kind]
        self.peer_r = topo.peer_router.tolist()
        self.peer_p = topo.peer_port.tolist()

        self.q = EventQueue()
        self.rng_t = _rng_from_state(setup.traffic_state)
        self.rng_e = _rng_from_state(setup.explore_state)
        self.rng_v = _rng_from_state(setup.val_state)

        nports = m * k
        self.credits = [self.cap] * (nports * V)
        self.occ = [0] * (nports * V)
        self.pkt_fly = [0] * (nports * V)
        self.cred_fly = [0] * (nports * V)
        self.used = [0] * nports
        self.queued = [0] * nports
        self.busy = [0] * nports
        self.pending = [-1] * nports     # time of the scheduled TRY wakeup
        self.rr = [-1] * nports
        self.voq = [None] * nports
        self.active = [None] * nports

        N = topo.nodes
        self.nq = [deque() for _ in range(N)]
        self.ncred = [self.cap] * N
        self.nbusy = [0] * N
        self.npending = [-1] * N
        self.nfly = [0] * N
        self.ncred_fly = [0] * N
        self.cursor = [0] * N
        self.gen_k = [0] * N
        self.phases = setup.phases.tolist()
        self.epoch = 0
        self.seg_start = 0
        self.seg_interval = math.inf

        if setup.qtables is not None:
            self.qt = [tab.tolist() for tab in setup.qtables]
        else:
            self.qt = None

        self.next_pid = 0
        self.generated = 0
        self.injected = 0
        self.delivered = 0
        self.fb_sent = 0
        self.fb_recv = 0
        self.hop_violations = 0
        self.credit_violations = 0
        self.max_hops = 0
        self.last_progress = 0
        self.ejecting = 0
        self.win = {}
        self.rec = []
        self.trace_rows = [] if setup.trace else None
        self.record_from = setup.record_from
        self.record_to = setup.record_to

        for i, (start, _) in enumerate(setup.segments):
            self.q.schedule(start, LOAD, i)
        self.q.schedule(setup.window_ns, TICK)

    # ------------------------------------------------------------------ queries
    def congestion(self, r, port):
        o = r * self.k + port
        return self.queued[o] + self.used[o]

    def qtable(self, r):
        return None if self.qt is None else np.array(self.qt[r])

    def set_record_window(self, t0, t1):
        """Keep per-packet records for deliveries in ``[t0, t1)`` from now on."""
        self.record_from, self.record_to = t0, t1

    # ------------------------------------------------------------------ running
    def run_until(self, t_end):
        q = self.q
        heap = q._heap
        handlers = self._handlers()
        while heap and heap[0][0] <= t_end:
            _, _, kind, a, b, c = q.pop()
            handlers[kind](a, b, c)
        if not heap:
            inflight = self.generated - self.delivered
            if inflight:
                raise DeadlockError(f"event queue drained at t={q.now} with {inflight} "
                                    f"packets undelivered")
        if t_end > q.now and t_end < 2**62:
            q.now = t_end
        return SimulationSummary(events=q.processed, clock=q.now)

    def _handlers(self):
        return {
            GEN: self._on_gen, ARRIVE: self._on_arrival, TRY: self._on_try,
            CREDIT: self._on_credit, FEEDBACK: self._on_feedback, TICK: self._on_tick,
            LOAD: self._on_load, NODE_CREDIT: self._on_node_credit,
            NODE_SEND: self._on_node_send, DELIVER: self._on_deliver,
        }

    def _window(self, t):
        w = self.win.get(t // self.s.window_ns)
        if w is None:
            w = self.win[t // self.s.window_ns] = [0, 0, 0, 0]
        return w

    # ------------------------------------------------------------------ traffic
    def _on_load(self, seg, _b, _c):
        start, interval = self.s.segments[seg]
        self.epoch += 1
        self.seg_start = start
        self.seg_interval = interval
        if math.isinf(interval):
            return
        for n in range(self.topo.nodes):
            self.gen_k[n] = 0
            t = start + math.floor(self.phases[n] * interval)
            if t < self.s.gen_stop:
                self.q.schedule(t, GEN, n, self.epoch)

    def inject(self, src, dst):
        """Queue one packet at node ``src`` at the current clock."""
        now = self.q.now
        self.nq[src].append((self.next_pid, now, dst))
        self.next_pid += 1
        self.generated += 1
        self._window(now)[3] += 1
        self._node_try(src)

    def _on_gen(self, n, epoch, _c):
        if epoch != self.epoch:
            return
        now = self.q.now
        dst = pick_destination(n, self.s.compiled, self.topo, self.rng_t, self.cursor)
        if dst >= 0:
            self.nq[n].append((self.next_pid, now, dst))
            self.next_pid += 1
            self.generated += 1
            self._window(now)[3] += 1
            self._node_try(n)
        k = self.gen_k[n] = self.gen_k[n] + 1
        t = self.seg_start + math.floor((self.phases[n] + k) * self.seg_interval)
        if t < self.s.gen_stop:
            self.q.schedule(t, GEN, n, epoch)

    def _node_try(self, n):
        now = self.q.now
        if self.nbusy[n] > now:
            if self.npending[n] != self.nbusy[n] and self.nq[n]:
                self.npending[n] = self.nbusy[n]
                self.q.schedule(self.nbusy[n], NODE_SEND, n)
            return
        if not self.nq[n] or self.ncred[n] == 0:
            return
        pid, t_gen, dst = self.nq[n].popleft()
        pkt = Packet(pid, n, dst, t_gen, self.p, self.a)
        if self.trace_rows is not None:
            pkt.path = []
        self.ncred[n] -= 1
        self.nfly[n] += 1
        self.injected += 1
        self.nbusy[n] = now + self.ser
        r, port = n // self.p, n % self.p
        self.q.schedule(now + self.ser + self.timing.host_latency_ns + self.rlat, ARRIVE, r, port, pkt)
        if self.nq[n]:
            self.npending[n] = self.nbusy[n]
            self.q.schedule(self.nbusy[n], NODE_SEND, n)

    def _on_node_send(self, n, _b, _c):
        if self.npending[n] == self.q.now:
            self.npending[n] = -1
        self._node_try(n)

    def _on_node_credit(self, n, _b, _c):
        self.ncred[n] += 1
        self.ncred_fly[n] -= 1
        if self.ncred[n] > self.cap:
            self._violation(f"node {n} credit overflow")
        if self.s.audit:
            self._audit_host(n)
        self._node_try(n)

    # ------------------------------------------------------------------ routers
    def _route(self, r, pkt):
        tag = self.tag
        topo = self.topo
        if tag == routing.MIN:
            return routing.route_min(topo, r, pkt)
        if tag == routing.QADAPTIVE:
            return qlearn.qadaptive_route(topo, r, pkt, self.qt[r], self.hp, self.rng_e)
        if tag == routing.QROUTING:
            return qlearn.qrouting_route(topo, r, pkt, self.qt[r], self.maxq, self.hp.epsilon, self.rng_e)
        if tag == routing.VALG:
            return routing.route_valg(topo, r, pkt, self.rng_v)
        if tag == routing.VALN:
            return routing.route_valn(topo, r, pkt, self.rng_v)
        if tag == routing.UGALG:
            return routing.route_ugal(topo, r, pkt, self.rng_v, False, self.congestion, self.bias)
        if tag == routing.UGALN:
            return routing.route_ugal(topo, r, pkt, self.rng_v, True, self.congestion, self.bias)
        return routing.route_par(topo, r, pkt, self.rng_v, self.congestion, self.bias)

    def _on_arrival(self, r, in_port, pkt):
        now = self.q.now
        k, V = self.k, self.V
        vc = pkt.vc
        ci = (r * k + in_port) * V + vc
        if self.occ[ci] >= self.cap:
            raise ContractViolation(f"buffer overflow at router {r} port {in_port} vc {vc}")
        self.occ[ci] += 1
        if in_port < self.p:
            self.nfly[r * self.p + in_port] -= 1
            up = -1
        else:
            up = self.peer_r[r][in_port]
            up_port = self.peer_p[r][in_port]
            self.pkt_fly[(up * k + up_port) * V + vc] -= 1
        prev_arrival = pkt.arr_time
        pkt.arr_time = now
        pkt.in_port = in_port
        if pkt.path is not None:
            pkt.path.append(r)
        if (self.is_global[in_port] and pkt.inter_state == INTER_NONE
                and r // self.a != pkt.dst_group):
            pkt.inter_state = INTER_PENDING
        out = self._route(r, pkt)
        pkt.out_port = out
        if up >= 0 and self.qt is not None:
            if self.tag == routing.QADAPTIVE:
                qn = qlearn.qadaptive_feedback(self.topo, r, pkt, out, self.qt[r], self.timing)
                row = pkt.dst_group * self.p + pkt.src_local
            else:
                qn = qlearn.qrouting_feedback(self.topo, r, pkt, out, self.qt[r], self.timing)
                row = pkt.dst_router
            self.fb_sent += 1
            self.q.schedule(now + self.lat[in_port], FEEDBACK, up, up_port,
                            (row, now - prev_arrival, qn))
        if self.s.audit:
            if up >= 0:
                self._audit_channel(up, up_port, vc)
            else:
                self._audit_host(r * self.p + in_port)
        o = r * k + out
        slot = in_port * V + vc
        qs = self.voq[o]
        if qs is None:
            qs = self.voq[o] = {}
            self.active[o] = []
        dq = qs.get(slot)
        if dq is None:
            dq = qs[slot] = deque()
        if not dq:
            insort(self.active[o], slot)
        dq.append(pkt)
        self.queued[o] += 1
        self._try_forward(r, out)

    def _on_try(self, r, out, _c):
        o = r * self.k + out
        if self.pending[o] == self.q.now:
            self.pending[o] = -1
        self._try_forward(r, out)

    def _try_forward(self, r, out):
        now = self.q.now
        k, V = self.k, self.V
        o = r * k + out
        if self.busy[o] > now:
            if self.pending[o] != self.busy[o] and self.queued[o]:
                self.pending[o] = self.busy[o]
                self.q.schedule(self.busy[o], TRY, r, out)
            return
        if not self.queued[o]:
            return
        act = self.active[o]
        start = bisect_right(act, self.rr[o])
        to_host = out < self.p
        chosen = -1
        for i in range(len(act)):
            slot = act[(start + i) % len(act)]
            head = self.voq[o][slot][0]
            if to_host:
                chosen = slot
                break
            nv = head.hops
            if nv >= V:
                self.hop_violations += 1
                raise ContractViolation(f"packet {head.id} exceeds hop cap {self.hop_cap}")
            if self.credits[o * V + nv] > 0:
                chosen = slot
                break
        if chosen < 0:
            return
        dq = self.voq[o][chosen]
        pkt = dq.popleft()
        if not dq:
            act.remove(chosen)
        self.queued[o] -= 1
        self.rr[o] = chosen
        self.last_progress = now
        in_port, in_vc = divmod(chosen, V)
        ci = (r * k + in_port) * V + in_vc
        self.occ[ci] -= 1
        if in_port < self.p:
            n = r * self.p + in_port
            self.ncred_fly[n] += 1
            self.q.schedule(now + self.lat[in_port], NODE_CREDIT, n)
        else:
            up = self.peer_r[r][in_port]
            up_port = self.peer_p[r][in_port]
            self.cred_fly[(up * k + up_port) * V + in_vc] += 1
            self.q.schedule(now + self.lat[in_port], CREDIT, up, up_port, in_vc)
        self.busy[o] = now + self.ser
        if to_host:
            self.ejecting += 1
            self.q.schedule(now + self.ser + self.lat[out], DELIVER, 0, 0, pkt)
        else:
            nv = pkt.hops
            self.credits[o * V + nv] -= 1
            self.used[o] += 1
            self.pkt_fly[o * V + nv] += 1
            pkt.vc = nv
            pkt.hops = nv + 1
            if pkt.hops > self.max_hops:
                self.max_hops = pkt.hops
            self.q.schedule(now + self.ser + self.lat[out] + self.rlat, ARRIVE,
                            self.peer_r[r][out], self.peer_p[r][out], pkt)
            if self.s.audit:
                self._audit_channel(r, out, nv)
        if self.s.audit:
            if in_port < self.p:
                self._audit_host(r * self.p + in_port)
            else:
                self._audit_channel(self.peer_r[r][in_port], self.peer_p[r][in_port], in_vc)
        if self.queued[o]:
            self.pending[o] = self.busy[o]
            self.q.schedule(self.busy[o], TRY, r, out)

    def _on_credit(self, r, port, vc):
        o = r * self.k + port
        ci = o * self.V + vc
        self.credits[ci] += 1
        self.used[o] -= 1
        self.cred_fly[ci] -= 1
        if self.credits[ci] > self.cap:
            self._violation(f"credit overflow at router {r} port {port} vc {vc}")
        if self.s.audit:
            self._audit_channel(r, port, vc)
        self._try_forward(r, port)

    def _on_feedback(self, r, port, payload):
        row, reward, qn = payload
        self.fb_recv += 1
        col = port - self.p
        tab = self.qt[r]
        if self.tag == routing.QADAPTIVE:
            if row // self.p == r // self.a:
                return
            tab[row][col] = qlearn.hysteretic_update(tab[row][col], reward, qn,
                                                     self.hp.alpha, self.hp.beta)
        else:
            tab[row][col] = qlearn.qrouting_update(tab[row][col], reward, qn, self.hp.alpha)

    def _on_deliver(self, _a, _b, pkt):
        now = self.q.now
        self.ejecting -= 1
        self.delivered += 1
        lat = now - pkt.gen_time
        w = self._window(now)
        w[0] += 1
        w[1] += lat
        w[2] += pkt.hops
        if pkt.hops > self.hop_cap:
            self.hop_violations += 1
        if self.record_from <= now < self.record_to:
            self.rec.append((pkt.gen_time, now, pkt.hops, pkt.src_node, pkt.dst_node))
        if self.trace_rows is not None:
            self.trace_rows.append((pkt.id, pkt.src_node, pkt.dst_node, pkt.gen_time, now,
                                    pkt.hops, "-".join(map(str, pkt.path))))

    def _on_tick(self, _a, _b, _c):
        now = self.q.now
        inflight = self.generated - self.delivered
        if self.s.audit:
            located = (sum(len(x) for x in self.nq) + sum(self.occ) + sum(self.pkt_fly)
                       + sum(self.nfly) + self.ejecting)
            if located != inflight:
                self._violation(f"packet conservation: {located} located vs {inflight} in flight")
        buffered = self.injected - self.delivered
        if buffered and now - self.last_progress > self.s.deadlock_ns:
            raise DeadlockError(f"no router progress for {now - self.last_progress} ns "
                                f"with {buffered} packets in the network")
        generating = now < self.s.gen_stop and not math.isinf(self.seg_interval)
        future_load = any(t > now for t, _ in self.s.segments)
        if inflight or generating or future_load:
            self.q.schedule(now + self.s.window_ns, TICK)

    # ------------------------------------------------------------------ audits
    def _violation(self, msg):
        self.credit_violations += 1
        raise ContractViolation(msg)

    def _audit_channel(self, r, port, vc):
        ci = (r * self.k + port) * self.V + vc
        dr, dp = self.peer_r[r][port], self.peer_p[r][port]
        down = self.occ[(dr * self.k + dp) * self.V + vc]
        total = self.credits[ci] + self.pkt_fly[ci] + down + self.cred_fly[ci]
        if total != self.cap or self.credits[ci] < 0:
            self._violation(f"credit conservation broken on router {r} port {port} vc {vc}: "
                            f"{total} != {self.cap}")

    def _audit_host(self, n):
        r, port = divmod(n, self.p)
        down = self.occ[(r * self.k + port) * self.V]
        total = self.ncred[n] + self.nfly[n] + down + self.ncred_fly[n]
        if total != self.cap or self.ncred[n] < 0:
            self._violation(f"credit conservation broken on node {n}: {total} != {self.cap}")

    # ------------------------------------------------------------------ results
    def results(self):
        nwin = self.q.now // self.s.window_ns + 1
        win = np.zeros((4, nwin), dtype=np.int64)
        for i, vals in self.win.items():
            if i < nwin:
                win[:, i] = vals
        rec = np.array(self.rec, dtype=np.int64).reshape(-1, 5)
        return {
            "backend": self.backend,
            "generated": self.generated,
            "injected": self.injected,
            "delivered": self.delivered,
            "inflight": self.generated - self.delivered,
            "feedback_sent": self.fb_sent,
            "feedback_received": self.fb_recv,
            "hop_violations": self.hop_violations,
            "credit_violations": self.credit_violations,
            "max_hops": self.max_hops,
            "events": self.q.processed,
            "clock": self.q.now,
            "win_count": win[0], "win_lat": win[1], "win_hops": win[2], "win_gen": win[3],
            "rec_gen": rec[:, 0], "rec_deliver": rec[:, 1], "rec_hops": rec[:, 2],
            "rec_src": rec[:, 3], "rec_dst": rec[:, 4],
            "trace": self.trace_rows,
        }

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation core.

Event-for-event twin of ``_pysim.Simulator``: same event order, same random
draws, same floating-point operations.  State lives in flat C arrays; packets
and source-queue entries come from growable pools addressed by index.
"""
import numpy as np
cimport numpy as cnp

from libc.math cimport floor, isinf
from libc.stdint cimport int8_t, int32_t, int64_t, uint64_t
from libc.stdlib cimport free, malloc, realloc
from libc.string cimport memset

from .engine import ContractViolation, DeadlockError, SimulationSummary

cnp.import_array()

# event kinds; values match engine.EventKind
DEF K_GEN = 0
DEF K_ARRIVE = 1
DEF K_TRY = 2
DEF K_CREDIT = 3
DEF K_FEEDBACK = 4
DEF K_TICK = 5
DEF K_LOAD = 6
DEF K_NODE_CREDIT = 7
DEF K_NODE_SEND = 8
DEF K_DELIVER = 9

DEF A_MIN = 0
DEF A_VALG = 1
DEF A_VALN = 2
DEF A_UGALG = 3
DEF A_UGALN = 4
DEF A_PAR = 5
DEF A_QROUTING = 6
DEF A_QADAPTIVE = 7

DEF T_UR = 0
DEF T_ADV = 1
DEF T_RR = 2
DEF T_RAND = 3

DEF WAY_NONE = 0
DEF WAY_GROUP = 1
DEF WAY_ROUTER = 2
DEF INTER_NONE = 0
DEF INTER_PENDING = 1
DEF INTER_DONE = 2

DEF GLOBAL_KIND = 2
DEF MAXPATH = 32

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef struct Ev:
    int64_t t
    int64_t seq
    int32_t kind
    int32_t a
    int32_t b
    int32_t c
    int64_t d
    double x


cdef struct Pkt:
    int64_t id
    int64_t gen_time
    int64_t arr_time
    int32_t src_node
    int32_t dst_node
    int32_t src_router
    int32_t dst_router
    int32_t src_group
    int32_t dst_group
    int32_t src_local
    int32_t vc
    int32_t hops
    int32_t way_kind
    int32_t way
    int32_t in_port
    int32_t out_port
    int32_t next
    int32_t path_len
    int8_t par_min
    int8_t inter_state


cdef struct Src:
    int64_t pid
    int64_t t
    int32_t dst
    int32_t next


cdef inline uint64_t rng_next(uint64_t* s) noexcept nogil:
    s[0] = s[0] + GOLDEN
    cdef uint64_t z = s[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double rng_random(uint64_t* s) noexcept nogil:
    return <double>(rng_next(s) >> 11) * (1.0 / 9007199254740992.0)


cdef inline int32_t rng_below(uint64_t* s, int64_t n) noexcept nogil:
    return <int32_t>(((rng_next(s) >> 32) * <uint64_t>n) >> 32)


cdef class Simulator:
    cdef readonly str backend
    cdef readonly object setup, topo
    # sizes
    cdef int32_t p, a, h, k, g, m, N, V, S, cap, hop_cap, tag, bias, maxq
    cdef int64_t ser, rlat, host_lat, window_ns, record_from, record_to, gen_stop, deadlock_ns
    cdef bint audit, trace
    cdef double alpha, beta, eps, thld1, thld2
    cdef int64_t host_delivery, group_tail
    # topology
    cdef int32_t[::1] peer_r, peer_p
    cdef int64_t[::1] lat
    cdef int8_t[::1] is_global
    # router state, indexed by (r*k + port)[*V + vc]
    cdef int32_t[::1] credits, occ, pkt_fly, cred_fly
    cdef int32_t[::1] used, queued, rr
    cdef int64_t[::1] busy, pending
    cdef int32_t[::1] vhead, vtail
    # nodes
    cdef int32_t[::1] ncred, nfly, ncred_fly, cursor, sq_head, sq_tail, sq_len
    cdef int64_t[::1] nbusy, npending, gen_k
    cdef double[::1] phases
    # traffic
    cdef int32_t tmode, toffset
    cdef int64_t[::1] tptr
    cdef int32_t[::1] targets
    cdef int64_t[::1] seg_starts
    cdef double[::1] seg_intervals
    cdef int32_t nseg
    cdef int64_t epoch, seg_start
    cdef double seg_interval
    # q tables
    cdef double[::1] qt
    cdef int32_t qrows, qcols
    cdef bint has_q
    # rng
    cdef uint64_t rs_t, rs_e, rs_v
    # heap
    cdef Ev* heap
    cdef int64_t hn, hcap, seq, now, processed
    # pools
    cdef Pkt* pk
    cdef int32_t pk_cap, pk_free
    cdef int32_t* paths
    cdef Src* sq
    cdef int32_t sq_cap, sq_free
    # counters
    cdef int64_t next_pid, generated, injected, delivered, fb_sent, fb_recv
    cdef int64_t hop_violations, credit_violations, max_hops, last_progress, ejecting
    # windows / records
    cdef int64_t* win
    cdef int64_t win_cap
    cdef int64_t* rec
    cdef int64_t rec_n, rec_cap
    cdef list trace_rows

    def __cinit__(self):
        self.heap = NULL
        self.pk = NULL
        self.paths = NULL
        self.sq = NULL
        self.win = NULL
        self.rec = NULL

    def __dealloc__(self):
        free(self.heap)
        free(self.pk)
        free(self.paths)
        free(self.sq)
        free(self.win)
        free(self.rec)

    def __init__(self, setup):
        self.backend = "cython"
        self.setup = setup
        topo = self.topo = setup.topo
        self.p, self.a, self.h, self.k = topo.p, topo.a, topo.h, topo.k
        self.g, self.m, self.N = topo.g, topo.m, topo.nodes
        alg = setup.algorithm
        self.tag = alg.tag
        self.V = alg.vc_count
        self.S = self.k * self.V
        self.cap = setup.vc_buffer
        self.hop_cap = alg.hop_cap
        self.bias = alg.bias
        self.maxq = alg.maxq
        if self.hop_cap + 1 > MAXPATH:
            raise ValueError(f"hop cap {self.hop_cap} exceeds the compiled core limit {MAXPATH - 1}")
        hp = setup.hp
        self.alpha, self.beta, self.eps = hp.alpha, hp.beta, hp.epsilon
        self.thld1, self.thld2 = hp.q_thld1, hp.q_thld2
        t = setup.timing
        self.ser = t.serialization_ns
        self.rlat = t.router_latency_ns
        self.host_lat = t.host_latency_ns
        self.host_delivery = t.host_delivery
        self.group_tail = t.local_hop + t.host_delivery
        self.window_ns = setup.window_ns
        self.record_from = setup.record_from
        self.record_to = setup.record_to
        self.gen_stop = setup.gen_stop
        self.deadlock_ns = setup.deadlock_ns
        self.audit = setup.audit
        self.trace = setup.trace

        self.peer_r = np.ascontiguousarray(topo.peer_router, dtype=np.int32).ravel().copy()
        self.peer_p = np.ascontiguousarray(topo.peer_port, dtype=np.int32).ravel().copy()
        self.lat = np.array([t.link_latency(int(kd)) for kd in topo.port_kind], dtype=np.int64)
        self.is_global = np.array([int(kd) == GLOBAL_KIND for kd in topo.port_kind], dtype=np.int8)

        cdef int64_t nports = <int64_t>self.m * self.k
        self.credits = np.full(nports * self.V, self.cap, dtype=np.int32)
        self.occ = np.zeros(nports * self.V, dtype=np.int32)
        self.pkt_fly = np.zeros(nports * self.V, dtype=np.int32)
        self.cred_fly = np.zeros(nports * self.V, dtype=np.int32)
        self.used = np.zeros(nports, dtype=np.int32)
        self.queued = np.zeros(nports, dtype=np.int32)
        self.rr = np.full(nports, -1, dtype=np.int32)
        self.busy = np.zeros(nports, dtype=np.int64)
        self.pending = np.full(nports, -1, dtype=np.int64)
        self.vhead = np.full(nports * self.S, -1, dtype=np.int32)
        self.vtail = np.full(nports * self.S, -1, dtype=np.int32)

        self.ncred = np.full(self.N, self.cap, dtype=np.int32)
        self.nfly = np.zeros(self.N, dtype=np.int32)
        self.ncred_fly = np.zeros(self.N, dtype=np.int32)
        self.cursor = np.zeros(self.N, dtype=np.int32)
        self.sq_head = np.full(self.N, -1, dtype=np.int32)
        self.sq_tail = np.full(self.N, -1, dtype=np.int32)
        self.sq_len = np.zeros(self.N, dtype=np.int32)
        self.nbusy = np.zeros(self.N, dtype=np.int64)
        self.npending = np.full(self.N, -1, dtype=np.int64)
        self.gen_k = np.zeros(self.N, dtype=np.int64)
        self.phases = np.ascontiguousarray(setup.phases, dtype=np.float64).copy()

        c = setup.compiled
        self.tmode = c.mode
        self.toffset = c.offset
        self.tptr = np.ascontiguousarray(c.targets_ptr, dtype=np.int64)
        self.targets = np.ascontiguousarray(c.targets, dtype=np.int32)
        if len(self.targets) == 0:
            self.targets = np.zeros(1, dtype=np.int32)
        self.nseg = len(setup.segments)
        self.seg_starts = np.array([s for s, _ in setup.segments], dtype=np.int64)
        self.seg_intervals = np.array([iv for _, iv in setup.segments], dtype=np.float64)
        self.epoch = 0
        self.seg_start = 0
        self.seg_interval = float("inf")

        if setup.qtables is not None:
            qt = np.ascontiguousarray(setup.qtables, dtype=np.float64)
            self.qrows, self.qcols = qt.shape[1], qt.shape[2]
            self.qt = qt.ravel().copy()
            self.has_q = True
        else:
            self.qt = np.zeros(1)
            self.has_q = False

        self.rs_t = setup.traffic_state
        self.rs_e = setup.explore_state
        self.rs_v = setup.val_state

        self.hcap = 1024
        self.heap = <Ev*>malloc(self.hcap * sizeof(Ev))
        self.hn = 0
        self.seq = 0
        self.now = 0
        self.processed = 0
        self.pk_cap = 0
        self.pk_free = -1
        self.sq_cap = 0
        self.sq_free = -1
        self._grow_packets()
        self._grow_src()
        self.win_cap = 64
        self.win = <int64_t*>malloc(self.win_cap * 4 * sizeof(int64_t))
        memset(self.win, 0, self.win_cap * 4 * sizeof(int64_t))
        self.rec_cap = 1024
        self.rec_n = 0
        self.rec = <int64_t*>malloc(self.rec_cap * 5 * sizeof(int64_t))
        if self.heap == NULL or self.win == NULL or self.rec == NULL:
            raise MemoryError()
        self.trace_rows = [] if self.trace else None

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

        cdef int32_t i
        for i in range(self.nseg):
            self._schedule(self.seg_starts[i], K_LOAD, i, 0, 0, 0, 0.0)
        self._schedule(self.window_ns, K_TICK, 0, 0, 0, 0, 0.0)

    # ------------------------------------------------------------------ pools
    cdef int _grow_packets(self) except -1:
        cdef int32_t old = self.pk_cap
        cdef int32_t new = 1024 if old == 0 else old * 2
        cdef Pkt* p2 = <Pkt*>realloc(self.pk, new * sizeof(Pkt))
        if p2 == NULL:
            raise MemoryError()
        self.pk = p2
        if self.trace:
            pp = <int32_t*>realloc(self.paths, new * MAXPATH * sizeof(int32_t))
            if pp == NULL:
                raise MemoryError()
            self.paths = pp
        cdef int32_t i
        for i in range(new - 1, old - 1, -1):
            self.pk[i].next = self.pk_free
            self.pk_free = i
        self.pk_cap = new
        return 0

    cdef int _grow_src(self) except -1:
        cdef int32_t old = self.sq_cap
        cdef int32_t new = 1024 if old == 0 else old * 2
        cdef Src* s2 = <Src*>realloc(self.sq, new * sizeof(Src))
        if s2 == NULL:
            raise MemoryError()
        self.sq = s2
        cdef int32_t i
        for i in range(new - 1, old - 1, -1):
            self.sq[i].next = self.sq_free
            self.sq_free = i
        self.sq_cap = new
        return 0

    # ------------------------------------------------------------------ heap
    cdef inline bint _less(self, Ev* x, Ev* y) noexcept nogil:
        return x.t < y.t or (x.t == y.t and x.seq < y.seq)

    cdef int _schedule(self, int64_t t, int32_t kind, int32_t a, int32_t b, int32_t c,
                       int64_t d, double x) except -1:
        if t < self.now:
            raise ContractViolation(f"event kind {kind} scheduled at {t} < now {self.now}")
        cdef Ev* h2
        if self.hn == self.hcap:
            h2 = <Ev*>realloc(self.heap, self.hcap * 2 * sizeof(Ev))
            if h2 == NULL:
                raise MemoryError()
            self.heap = h2
            self.hcap *= 2
        cdef Ev ev
        ev.t = t
        ev.seq = self.seq
        ev.kind = kind
        ev.a = a
        ev.b = b
        ev.c = c
        ev.d = d
        ev.x = x
        self.seq += 1
        cdef int64_t i = self.hn
        cdef int64_t parent
        self.hn += 1
        while i > 0:
            parent = (i - 1) >> 1
            if self._less(&ev, &self.heap[parent]):
                self.heap[i] = self.heap[parent]
                i = parent
            else:
                break
        self.heap[i] = ev
        return 0

    cdef inline Ev _pop(self) noexcept nogil:
        cdef Ev top = self.heap[0]
        self.hn -= 1
        cdef Ev last = self.heap[self.hn]
        cdef int64_t i = 0, child
        cdef int64_t n = self.hn
        while True:
            child = 2 * i + 1
            if child >= n:
                break
            if child + 1 < n and self._less(&self.heap[child + 1], &self.heap[child]):
                child += 1
            if self._less(&self.heap[child], &last):
                self.heap[i] = self.heap[child]
                i = child
            else:
                break
        if n > 0:
            self.heap[i] = last
        return top

    # ------------------------------------------------------------------ topology helpers
    cdef inline int32_t _local_port(self, int32_t r, int32_t peer_index) noexcept nogil:
        cdef int32_t i = r % self.a
        return self.p + (peer_index if peer_index < i else peer_index - 1)

    cdef inline int32_t _gateway(self, int32_t r, int32_t gdst, int32_t* port) noexcept nogil:
        cdef int32_t G = r // self.a
        cdef int32_t ordinal = (gdst - G + self.g) % self.g - 1
        port[0] = self.p + self.a - 1 + ordinal % self.h
        return G * self.a + ordinal // self.h

    cdef inline int32_t _min_port_to_group(self, int32_t r, int32_t gdst) noexcept nogil:
        cdef int32_t port
        cdef int32_t gw = self._gateway(r, gdst, &port)
        if gw == r:
            return port
        return self._local_port(r, gw % self.a)

    cdef inline int32_t _min_port(self, int32_t r, int32_t dst) noexcept nogil:
        if r // self.a == dst // self.a:
            return self._local_port(r, dst % self.a)
        return self._min_port_to_group(r, dst // self.a)

    cdef inline int32_t _route_min(self, int32_t r, Pkt* pk) noexcept nogil:
        if r == pk.dst_router:
            return pk.dst_node % self.p
        return self._min_port(r, pk.dst_router)

    cdef inline int64_t _congestion(self, int32_t r, int32_t port) noexcept nogil:
        cdef int64_t o = <int64_t>r * self.k + port
        return self.queued[o] + self.used[o]

    # ------------------------------------------------------------------ routing
    cdef inline int32_t _follow_waypoint(self, int32_t r, Pkt* pk) noexcept nogil:
        if pk.way_kind == WAY_GROUP and r // self.a == pk.way:
            pk.way_kind = WAY_NONE
        elif pk.way_kind == WAY_ROUTER and r == pk.way:
            pk.way_kind = WAY_NONE
        if pk.way_kind == WAY_GROUP:
            return self._min_port_to_group(r, pk.way)
        if pk.way_kind == WAY_ROUTER:
            return self._min_port(r, pk.way)
        return self._route_min(r, pk)

    cdef inline int32_t _skip(self, int32_t x, int32_t sg, int32_t dg) noexcept nogil:
        cdef int32_t lo = sg if sg < dg else dg
        cdef int32_t hi = dg if sg < dg else sg
        if x >= lo:
            x += 1
        if hi != lo and x >= hi:
            x += 1
        return x

    cdef inline int32_t _draw_group(self, int32_t sg, int32_t dg) noexcept nogil:
        cdef int32_t count = self.g - (1 if sg == dg else 2)
        if count <= 0:
            return -1
        return self._skip(rng_below(&self.rs_v, count), sg, dg)

    cdef inline int32_t _draw_router(self, int32_t sg, int32_t dg) noexcept nogil:
        cdef int32_t count = self.g - (1 if sg == dg else 2)
        if count <= 0:
            return -1
        cdef int32_t x = rng_below(&self.rs_v, <int64_t>count * self.a)
        return self._skip(x // self.a, sg, dg) * self.a + x % self.a

    cdef bint _ugal_decide(self, int32_t r, Pkt* pk, bint by_router) noexcept nogil:
        cdef int32_t c1, c2, best
        cdef int64_t q1, q2, q_nm, q_min
        if by_router:
            c1 = self._draw_router(pk.src_group, pk.dst_group)
        else:
            c1 = self._draw_group(pk.src_group, pk.dst_group)
        if c1 < 0:
            return True
        if by_router:
            c2 = self._draw_router(pk.src_group, pk.dst_group)
            q1 = self._congestion(r, self._min_port(r, c1))
            q2 = self._congestion(r, self._min_port(r, c2))
        else:
            c2 = self._draw_group(pk.src_group, pk.dst_group)
            q1 = self._congestion(r, self._min_port_to_group(r, c1))
            q2 = self._congestion(r, self._min_port_to_group(r, c2))
        if q1 <= q2:
            best = c1
            q_nm = q1
        else:
            best = c2
            q_nm = q2
        q_min = self._congestion(r, self._min_port(r, pk.dst_router))
        if q_min < 2 * q_nm + self.bias:
            return True
        pk.way_kind = WAY_ROUTER if by_router else WAY_GROUP
        pk.way = best
        return False

    cdef inline int32_t _qargmin(self, int64_t base) noexcept nogil:
        cdef int32_t i, best = 0
        cdef double bv = self.qt[base]
        for i in range(1, self.qcols):
            if self.qt[base + i] < bv:
                bv = self.qt[base + i]
                best = i
        return best

    cdef inline int32_t _select_temp(self, double q_min, double q_best, int32_t min_port,
                                     int32_t best_port, double threshold) noexcept nogil:
        if q_min <= 0:
            return min_port
        cdef double dv = (q_min - q_best) / q_min
        return min_port if dv < threshold else best_port

    cdef int32_t _route_qadaptive(self, int32_t r, Pkt* pk) noexcept nogil:
        cdef int32_t p = self.p
        cdef int32_t best, min_port, temp, gw, gport
        if r // self.a == pk.dst_group:
            return self._route_min(r, pk)
        cdef int64_t base = (<int64_t>r * self.qrows + pk.dst_group * p + pk.src_local) * self.qcols
        if pk.hops == 0:
            best = self._qargmin(base) + p
            min_port = self._min_port_to_group(r, pk.dst_group)
            temp = self._select_temp(self.qt[base + min_port - p], self.qt[base + best - p],
                                     min_port, best, self.thld1)
            if rng_random(&self.rs_e) < self.eps:
                return p + rng_below(&self.rs_e, self.k - p)
            return temp
        if pk.inter_state == INTER_PENDING:
            pk.inter_state = INTER_DONE
            gw = self._gateway(r, pk.dst_group, &gport)
            if gw == r:
                return gport
            min_port = self._local_port(r, gw % self.a)
            if self.a > 2:
                best = p + rng_below(&self.rs_e, self.a - 2)
                if best >= min_port:
                    best += 1
            else:
                best = min_port
            temp = self._select_temp(self.qt[base + min_port - p], self.qt[base + best - p],
                                     min_port, best, self.thld2)
            if rng_random(&self.rs_e) < self.eps:
                return p + rng_below(&self.rs_e, self.a - 1)
            return temp
        return self._route_min(r, pk)

    cdef int32_t _route_qrouting(self, int32_t r, Pkt* pk) noexcept nogil:
        if r == pk.dst_router or pk.hops >= self.maxq:
            return self._route_min(r, pk)
        cdef int64_t base = (<int64_t>r * self.qrows + pk.dst_router) * self.qcols
        cdef int32_t best = self._qargmin(base) + self.p
        if rng_random(&self.rs_e) < self.eps:
            return self.p + rng_below(&self.rs_e, self.k - self.p)
        return best

    cdef int32_t _route(self, int32_t r, Pkt* pk) noexcept nogil:
        cdef int32_t tag = self.tag
        if tag == A_MIN:
            return self._route_min(r, pk)
        if tag == A_QADAPTIVE:
            return self._route_qadaptive(r, pk)
        if tag == A_QROUTING:
            return self._route_qrouting(r, pk)
        if tag == A_VALG or tag == A_VALN:
            if pk.hops == 0 and r != pk.dst_router:
                if tag == A_VALG:
                    pk.way = self._draw_group(pk.src_group, pk.dst_group)
                    if pk.way >= 0:
                        pk.way_kind = WAY_GROUP
                else:
                    pk.way = self._draw_router(pk.src_group, pk.dst_group)
                    if pk.way >= 0:
                        pk.way_kind = WAY_ROUTER
            return self._follow_waypoint(r, pk)
        if tag == A_UGALG or tag == A_UGALN:
            if pk.hops == 0 and r != pk.dst_router:
                self._ugal_decide(r, pk, tag == A_UGALN)
            return self._follow_waypoint(r, pk)
        # PAR
        if r != pk.dst_router and pk.way_kind == WAY_NONE:
            if pk.hops == 0:
                pk.par_min = self._ugal_decide(r, pk, True)
            elif pk.par_min and r // self.a == pk.src_group:
                pk.par_min = self._ugal_decide(r, pk, True)
            else:
                pk.par_min = 0
        return self._follow_waypoint(r, pk)

    # ------------------------------------------------------------------ public API
    def congestion(self, int32_t r, int32_t port):
        return self._congestion(r, port)

    def qtable(self, int32_t r):
        if not self.has_q:
            return None
        cdef int64_t n = <int64_t>self.qrows * self.qcols
        return np.asarray(self.qt[r * n:(r + 1) * n]).reshape(self.qrows, self.qcols).copy()

    def set_record_window(self, int64_t t0, int64_t t1):
        """Keep per-packet records for deliveries in ``[t0, t1)`` from now on."""
        self.record_from = t0
        self.record_to = t1

    def inject(self, int32_t src, int32_t dst):
        """Queue one packet at node ``src`` at the current clock."""
        self._enqueue_src(src, self.now, dst)
        self._node_try(src)

    def run_until(self, int64_t t_end):
        cdef Ev ev
        while self.hn > 0 and self.heap[0].t <= t_end:
            ev = self._pop()
            self.now = ev.t
            self.processed += 1
            self._dispatch(&ev)
        if self.hn == 0:
            if self.generated - self.delivered:
                raise DeadlockError(f"event queue drained at t={self.now} with "
                                    f"{self.generated - self.delivered} packets undelivered")
        if t_end > self.now and t_end < (<int64_t>1 << 62):
            self.now = t_end
        return SimulationSummary(events=self.processed, clock=self.now)

    cdef int _dispatch(self, Ev* ev) except -1:
        cdef int32_t kind = ev.kind
        if kind == K_ARRIVE:
            return self._on_arrival(ev.a, ev.b, ev.c)
        if kind == K_TRY:
            if self.pending[<int64_t>ev.a * self.k + ev.b] == self.now:
                self.pending[<int64_t>ev.a * self.k + ev.b] = -1
            return self._try_forward(ev.a, ev.b)
        if kind == K_CREDIT:
            return self._on_credit(ev.a, ev.b, ev.c)
        if kind == K_FEEDBACK:
            self._on_feedback(ev.a, ev.b, ev.c, ev.d, ev.x)
            return 0
        if kind == K_GEN:
            return self._on_gen(ev.a, ev.d)
        if kind == K_NODE_SEND:
            if self.npending[ev.a] == self.now:
                self.npending[ev.a] = -1
            return self._node_try(ev.a)
        if kind == K_NODE_CREDIT:
            return self._on_node_credit(ev.a)
        if kind == K_DELIVER:
            return self._on_deliver(ev.c)
        if kind == K_TICK:
            return self._on_tick()
        if kind == K_LOAD:
            return self._on_load(ev.a)
        raise ContractViolation(f"unknown event kind {kind}")

    # ------------------------------------------------------------------ windows
    cdef int64_t* _window(self, int64_t t) except NULL:
        cdef int64_t w = t // self.window_ns
        cdef int64_t new
        cdef int64_t* w2
        if w >= self.win_cap:
            new = self.win_cap
            while new <= w:
                new *= 2
            w2 = <int64_t*>realloc(self.win, new * 4 * sizeof(int64_t))
            if w2 == NULL:
                raise MemoryError()
            memset(w2 + self.win_cap * 4, 0, (new - self.win_cap) * 4 * sizeof(int64_t))
            self.win = w2
            self.win_cap = new
        return self.win + w * 4

    # ------------------------------------------------------------------ traffic
    cdef int _on_load(self, int32_t seg) except -1:
        cdef int64_t start = self.seg_starts[seg]
        cdef double interval = self.seg_intervals[seg]
        cdef int64_t t
        cdef int32_t n
        self.epoch += 1
        self.seg_start = start
        self.seg_interval = interval
        if isinf(interval):
            return 0
        for n in range(self.N):
            self.gen_k[n] = 0
            t = start + <int64_t>floor(self.phases[n] * interval)
            if t < self.gen_stop:
                self._schedule(t, K_GEN, n, 0, 0, self.epoch, 0.0)
        return 0

    cdef int32_t _pick_destination(self, int32_t n) noexcept nogil:
        cdef int32_t d, G, gn, i
        cdef int64_t lo, count
        if self.tmode == T_UR:
            d = rng_below(&self.rs_t, self.N - 1)
            return d + 1 if d >= n else d
        if self.tmode == T_ADV:
            gn = self.a * self.p
            G = (n // gn + self.toffset) % self.g
            return G * gn + rng_below(&self.rs_t, gn)
        lo = self.tptr[n]
        count = self.tptr[n + 1] - lo
        if count == 0:
            return -1
        if self.tmode == T_RR:
            i = self.cursor[n]
            self.cursor[n] = (i + 1) % count
            return self.targets[lo + i]
        return self.targets[lo + rng_below(&self.rs_t, count)]

    cdef int _enqueue_src(self, int32_t n, int64_t t, int32_t dst) except -1:
        if self.sq_free < 0:
            self._grow_src()
        cdef int32_t e = self.sq_free
        self.sq_free = self.sq[e].next
        self.sq[e].pid = self.next_pid
        self.sq[e].t = t
        self.sq[e].dst = dst
        self.sq[e].next = -1
        if self.sq_tail[n] >= 0:
            self.sq[self.sq_tail[n]].next = e
        else:
            self.sq_head[n] = e
        self.sq_tail[n] = e
        self.sq_len[n] += 1
        self.next_pid += 1
        self.generated += 1
        self._window(t)[3] += 1
        return 0

    cdef int _on_gen(self, int32_t n, int64_t epoch) except -1:
        if epoch != self.epoch:
            return 0
        cdef int32_t dst = self._pick_destination(n)
        if dst >= 0:
            self._enqueue_src(n, self.now, dst)
            self._node_try(n)
        self.gen_k[n] += 1
        cdef int64_t t = self.seg_start + <int64_t>floor((self.phases[n] + <double>self.gen_k[n]) * self.seg_interval)
        if t < self.gen_stop:
            self._schedule(t, K_GEN, n, 0, 0, epoch, 0.0)
        return 0

    cdef int _node_try(self, int32_t n) except -1:
        cdef int64_t now = self.now
        if self.nbusy[n] > now:
            if self.npending[n] != self.nbusy[n] and self.sq_len[n] > 0:
                self.npending[n] = self.nbusy[n]
                self._schedule(self.nbusy[n], K_NODE_SEND, n, 0, 0, 0, 0.0)
            return 0
        if self.sq_len[n] == 0 or self.ncred[n] == 0:
            return 0
        cdef int32_t e = self.sq_head[n]
        self.sq_head[n] = self.sq[e].next
        if self.sq_head[n] < 0:
            self.sq_tail[n] = -1
        self.sq_len[n] -= 1
        if self.pk_free < 0:
            self._grow_packets()
        cdef int32_t pi = self.pk_free
        cdef Pkt* pk = &self.pk[pi]
        self.pk_free = pk.next
        pk.id = self.sq[e].pid
        pk.gen_time = self.sq[e].t
        pk.arr_time = self.sq[e].t
        pk.src_node = n
        pk.dst_node = self.sq[e].dst
        pk.src_router = n // self.p
        pk.dst_router = pk.dst_node // self.p
        pk.src_group = pk.src_router // self.a
        pk.dst_group = pk.dst_router // self.a
        pk.src_local = n % self.p
        pk.vc = 0
        pk.hops = 0
        pk.way_kind = WAY_NONE
        pk.way = -1
        pk.par_min = 0
        pk.inter_state = INTER_NONE
        pk.in_port = -1
        pk.out_port = -1
        pk.next = -1
        pk.path_len = 0
        self.sq[e].next = self.sq_free
        self.sq_free = e
        self.ncred[n] -= 1
        self.nfly[n] += 1
        self.injected += 1
        self.nbusy[n] = now + self.ser
        self._schedule(now + self.ser + self.host_lat + self.rlat, K_ARRIVE,
                       n // self.p, n % self.p, pi, 0, 0.0)
        if self.sq_len[n] > 0:
            self.npending[n] = self.nbusy[n]
            self._schedule(self.nbusy[n], K_NODE_SEND, n, 0, 0, 0, 0.0)
        return 0

    cdef int _on_node_credit(self, int32_t n) except -1:
        self.ncred[n] += 1
        self.ncred_fly[n] -= 1
        if self.ncred[n] > self.cap:
            self._violation(f"node {n} credit overflow")
        if self.audit:
            self._audit_host(n)
        return self._node_try(n)

    # ------------------------------------------------------------------ routers
    cdef int _on_arrival(self, int32_t r, int32_t in_port, int32_t pi) except -1:
        cdef int64_t now = self.now
        cdef int32_t k = self.k, V = self.V
        cdef Pkt* pk = &self.pk[pi]
        cdef int32_t vc = pk.vc
        cdef int64_t ci = (<int64_t>r * k + in_port) * V + vc
        cdef int32_t up = -1, up_port = -1, out, row
        cdef int64_t prev_arrival, o, slot
        cdef double qn
        if self.occ[ci] >= self.cap:
            raise ContractViolation(f"buffer overflow at router {r} port {in_port} vc {vc}")
        self.occ[ci] += 1
        if in_port < self.p:
            self.nfly[r * self.p + in_port] -= 1
        else:
            up = self.peer_r[<int64_t>r * k + in_port]
            up_port = self.peer_p[<int64_t>r * k + in_port]
            self.pkt_fly[(<int64_t>up * k + up_port) * V + vc] -= 1
        prev_arrival = pk.arr_time
        pk.arr_time = now
        pk.in_port = in_port
        if self.trace:
            self.paths[<int64_t>pi * MAXPATH + pk.path_len] = r
            pk.path_len += 1
        if self.is_global[in_port] and pk.inter_state == INTER_NONE and r // self.a != pk.dst_group:
            pk.inter_state = INTER_PENDING
        out = self._route(r, pk)
        pk.out_port = out
        if up >= 0 and self.has_q:
            if self.tag == A_QADAPTIVE:
                if r == pk.dst_router:
                    qn = <double>self.host_delivery
                elif r // self.a == pk.dst_group:
                    qn = <double>self.group_tail
                else:
                    qn = self.qt[(<int64_t>r * self.qrows + pk.dst_group * self.p + pk.src_local) * self.qcols + out - self.p]
                row = pk.dst_group * self.p + pk.src_local
            else:
                if r == pk.dst_router:
                    qn = <double>self.host_delivery
                else:
                    qn = self.qt[(<int64_t>r * self.qrows + pk.dst_router) * self.qcols + out - self.p]
                row = pk.dst_router
            self.fb_sent += 1
            self._schedule(now + self.lat[in_port], K_FEEDBACK, up, up_port, row,
                           now - prev_arrival, qn)
        if self.audit:
            if up >= 0:
                self._audit_channel(up, up_port, vc)
            else:
                self._audit_host(r * self.p + in_port)
        o = <int64_t>r * k + out
        slot = (o * self.S) + in_port * V + vc
        pk.next = -1
        if self.vtail[slot] >= 0:
            self.pk[self.vtail[slot]].next = pi
        else:
            self.vhead[slot] = pi
        self.vtail[slot] = pi
        self.queued[o] += 1
        return self._try_forward(r, out)

    cdef int _try_forward(self, int32_t r, int32_t out) except -1:
        cdef int64_t now = self.now
        cdef int32_t k = self.k, V = self.V, S = self.S
        cdef int64_t o = <int64_t>r * k + out
        cdef int64_t base = o * S
        cdef int32_t i, s, chosen = -1, pi, nv, in_port, in_vc, up, up_port, n
        cdef bint to_host
        cdef Pkt* pk
        if self.busy[o] > now:
            if self.pending[o] != self.busy[o] and self.queued[o]:
                self.pending[o] = self.busy[o]
                self._schedule(self.busy[o], K_TRY, r, out, 0, 0, 0.0)
            return 0
        if not self.queued[o]:
            return 0
        to_host = out < self.p
        s = self.rr[o]
        for i in range(S):
            s += 1
            if s == S:
                s = 0
            pi = self.vhead[base + s]
            if pi < 0:
                continue
            if to_host:
                chosen = s
                break
            nv = self.pk[pi].hops
            if nv >= V:
                self.hop_violations += 1
                raise ContractViolation(f"packet {self.pk[pi].id} exceeds hop cap {self.hop_cap}")
            if self.credits[o * V + nv] > 0:
                chosen = s
                break
        if chosen < 0:
            return 0
        pi = self.vhead[base + chosen]
        pk = &self.pk[pi]
        self.vhead[base + chosen] = pk.next
        if pk.next < 0:
            self.vtail[base + chosen] = -1
        self.queued[o] -= 1
        self.rr[o] = chosen
        self.last_progress = now
        in_port = chosen // V
        in_vc = chosen % V
        self.occ[(<int64_t>r * k + in_port) * V + in_vc] -= 1
        if in_port < self.p:
            n = r * self.p + in_port
            self.ncred_fly[n] += 1
            self._schedule(now + self.lat[in_port], K_NODE_CREDIT, n, 0, 0, 0, 0.0)
        else:
            up = self.peer_r[<int64_t>r * k + in_port]
            up_port = self.peer_p[<int64_t>r * k + in_port]
            self.cred_fly[(<int64_t>up * k + up_port) * V + in_vc] += 1
            self._schedule(now + self.lat[in_port], K_CREDIT, up, up_port, in_vc, 0, 0.0)
        self.busy[o] = now + self.ser
        if to_host:
            self.ejecting += 1
            self._schedule(now + self.ser + self.lat[out], K_DELIVER, 0, 0, pi, 0, 0.0)
        else:
            nv = pk.hops
            self.credits[o * V + nv] -= 1
            self.used[o] += 1
            self.pkt_fly[o * V + nv] += 1
            pk.vc = nv
            pk.hops = nv + 1
            if pk.hops > self.max_hops:
                self.max_hops = pk.hops
            self._schedule(now + self.ser + self.lat[out] + self.rlat, K_ARRIVE,
                           self.peer_r[o], self.peer_p[o], pi, 0, 0.0)
            if self.audit:
                self._audit_channel(r, out, nv)
        if self.audit:
            if in_port < self.p:
                self._audit_host(r * self.p + in_port)
            else:
                self._audit_channel(self.peer_r[<int64_t>r * k + in_port],
                                    self.peer_p[<int64_t>r * k + in_port], in_vc)
        if self.queued[o]:
            self.pending[o] = self.busy[o]
            self._schedule(self.busy[o], K_TRY, r, out, 0, 0, 0.0)
        return 0

    cdef int _on_credit(self, int32_t r, int32_t port, int32_t vc) except -1:
        cdef int64_t o = <int64_t>r * self.k + port
        cdef int64_t ci = o * self.V + vc
        self.credits[ci] += 1
        self.used[o] -= 1
        self.cred_fly[ci] -= 1
        if self.credits[ci] > self.cap:
            self._violation(f"credit overflow at router {r} port {port} vc {vc}")
        if self.audit:
            self._audit_channel(r, port, vc)
        return self._try_forward(r, port)

    cdef void _on_feedback(self, int32_t r, int32_t port, int32_t row, int64_t reward,
                           double qn) noexcept nogil:
        cdef int64_t idx
        cdef double q, delta
        self.fb_recv += 1
        if self.tag == A_QADAPTIVE:
            if row // self.p == r // self.a:
                return
            idx = (<int64_t>r * self.qrows + row) * self.qcols + port - self.p
            q = self.qt[idx]
            delta = <double>reward + qn - q
            if delta < 0:
                self.qt[idx] = q + self.alpha * delta
            else:
                self.qt[idx] = q + self.beta * delta
        else:
            idx = (<int64_t>r * self.qrows + row) * self.qcols + port - self.p
            q = self.qt[idx]
            self.qt[idx] = q + self.alpha * (<double>reward + qn - q)

    cdef int _on_deliver(self, int32_t pi) except -1:
        cdef int64_t now = self.now
        cdef Pkt* pk = &self.pk[pi]
        cdef int64_t* w
        cdef int64_t* r2
        cdef int64_t j
        self.ejecting -= 1
        self.delivered += 1
        w = self._window(now)
        w[0] += 1
        w[1] += now - pk.gen_time
        w[2] += pk.hops
        if pk.hops > self.hop_cap:
            self.hop_violations += 1
        if self.record_from <= now < self.record_to:
            if self.rec_n == self.rec_cap:
                r2 = <int64_t*>realloc(self.rec, self.rec_cap * 2 * 5 * sizeof(int64_t))
                if r2 == NULL:
                    raise MemoryError()
                self.rec = r2
                self.rec_cap *= 2
            j = self.rec_n * 5
            self.rec[j] = pk.gen_time
            self.rec[j + 1] = now
            self.rec[j + 2] = pk.hops
            self.rec[j + 3] = pk.src_node
            self.rec[j + 4] = pk.dst_node
            self.rec_n += 1
        if self.trace:
            path = "-".join([str(self.paths[<int64_t>pi * MAXPATH + j]) for j in range(pk.path_len)])
            self.trace_rows.append((pk.id, pk.src_node, pk.dst_node, pk.gen_time, now, pk.hops, path))
        pk.next = self.pk_free
        self.pk_free = pi
        return 0

    cdef int _on_tick(self) except -1:
        cdef int64_t now = self.now
        cdef int64_t inflight = self.generated - self.delivered
        cdef int64_t located, buffered, i
        cdef bint generating, future_load
        if self.audit:
            located = self.ejecting
            for i in range(self.N):
                located += self.sq_len[i] + self.nfly[i]
            for i in range(self.occ.shape[0]):
                located += self.occ[i] + self.pkt_fly[i]
            if located != inflight:
                self._violation(f"packet conservation: {located} located vs {inflight} in flight")
        buffered = self.injected - self.delivered
        if buffered and now - self.last_progress > self.deadlock_ns:
            raise DeadlockError(f"no router progress for {now - self.last_progress} ns "
                                f"with {buffered} packets in the network")
        generating = now < self.gen_stop and not isinf(self.seg_interval)
        future_load = False
        for i in range(self.nseg):
            if self.seg_starts[i] > now:
                future_load = True
        if inflight or generating or future_load:
            self._schedule(now + self.window_ns, K_TICK, 0, 0, 0, 0, 0.0)
        return 0

    # ------------------------------------------------------------------ audits
    cdef int _violation(self, str msg) except -1:
        self.credit_violations += 1
        raise ContractViolation(msg)

    cdef int _audit_channel(self, int32_t r, int32_t port, int32_t vc) except -1:
        cdef int64_t ci = (<int64_t>r * self.k + port) * self.V + vc
        cdef int32_t dr = self.peer_r[<int64_t>r * self.k + port]
        cdef int32_t dp = self.peer_p[<int64_t>r * self.k + port]
        cdef int64_t down = self.occ[(<int64_t>dr * self.k + dp) * self.V + vc]
        cdef int64_t total = self.credits[ci] + self.pkt_fly[ci] + down + self.cred_fly[ci]
        if total != self.cap or self.credits[ci] < 0:
            self._violation(f"credit conservation broken on router {r} port {port} vc {vc}: "
                            f"{total} != {self.cap}")
        return 0

    cdef int _audit_host(self, int32_t n) except -1:
        cdef int32_t r = n // self.p, port = n % self.p
        cdef int64_t down = self.occ[(<int64_t>r * self.k + port) * self.V]
        cdef int64_t total = self.ncred[n] + self.nfly[n] + down + self.ncred_fly[n]
        if total != self.cap or self.ncred[n] < 0:
            self._violation(f"credit conservation broken on node {n}: {total} != {self.cap}")
        return 0

    # ------------------------------------------------------------------ results
    def results(self):
        cdef int64_t nwin = self.now // self.window_ns + 1
        cdef int64_t i, j, upto
        win = np.zeros((4, nwin), dtype=np.int64)
        cdef int64_t[:, ::1] wv = win
        upto = nwin if nwin < self.win_cap else self.win_cap
        for i in range(upto):
            for j in range(4):
                wv[j, i] = self.win[i * 4 + j]
        rec = np.zeros((self.rec_n, 5), dtype=np.int64)
        cdef int64_t[:, ::1] rv = rec
        for i in range(self.rec_n):
            for j in range(5):
                rv[i, j] = self.rec[i * 5 + j]
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
            "events": self.processed,
            "clock": self.now,
            "win_count": win[0], "win_lat": win[1], "win_hops": win[2], "win_gen": win[3],
            "rec_gen": rec[:, 0], "rec_deliver": rec[:, 1], "rec_hops": rec[:, 2],
            "rec_src": rec[:, 3], "rec_dst": rec[:, 4],
            "trace": self.trace_rows,
        }

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the pure-Python simulation engine.

Mirrors sim.run round for round: same agent state machine, same consensus
instances, same adversary hashes, same trace rows folded into the same
FNV-1a fingerprint, same event tuples.  Sets are 64-bit masks over the
universe index (sorted real agent IDs followed by the phantom IDs), which
is why the agent count is capped at 60.
"""

from libc.stdint cimport int8_t, int32_t, int64_t, uint8_t, uint64_t
from libc.stdlib cimport free, malloc
from libc.string cimport memset

from .agent import (EV_ENDMC, EV_GID, EV_PCONS_DONE, EV_PCONS_INIT,
                    EV_READY, EV_STAGE, EV_TERM, PBC_ORACLE, ProtocolError)
from . import adversary as adv
from .sim import SimResult, validate_config

# stage codes
cdef int CID = 0, MC = 1, AID = 2, MG = 3
cdef int64_t GID_INF = <int64_t>0x7FFFFFFFFFFFFFFF  # (1 << 63) - 1

# action kinds (internal)
cdef int K_STAY = 0, K_TERM = 1, K_MOVE = 2, K_FOLLOW = 3

# trace action codes
cdef int ACT_STAY = 0, ACT_TERMINATE = 1, ACT_FOLLOW_STAY = 2
cdef int ACT_FOLLOW_TERMINATE = 3, ACT_MOVE_BASE = 16, ACT_FOLLOW_MOVE_BASE = 64

# strategies
cdef int SILENT = 0, LIAR = 1, IMPOSTOR = 2, LURE = 3
cdef int EQUIVOCATOR = 4, DISRUPTOR = 5

# consensus payload types
cdef int P_NONE = -1, P_SET = 0, P_ECHO = 1, P_TAGGED = 2

cdef uint64_t MASKALL = <uint64_t>0xFFFFFFFFFFFFFFFF


cdef inline uint64_t _mix(uint64_t x) nogil:
    x = x + <uint64_t>0x9E3779B97F4A7C15
    x = (x ^ (x >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    x = (x ^ (x >> 27)) * <uint64_t>0x94D049BB133111EB
    return x ^ (x >> 31)


cdef inline uint64_t h2(uint64_t s, uint64_t a, uint64_t b) nogil:
    s = _mix(s ^ a)
    return _mix(s ^ b)


cdef inline uint64_t h3(uint64_t s, uint64_t a, uint64_t b, uint64_t c) nogil:
    s = _mix(s ^ a)
    s = _mix(s ^ b)
    return _mix(s ^ c)


cdef inline uint64_t h5(uint64_t s, uint64_t a, uint64_t b, uint64_t c,
                        uint64_t d, uint64_t e) nogil:
    s = _mix(s ^ a)
    s = _mix(s ^ b)
    s = _mix(s ^ c)
    s = _mix(s ^ d)
    return _mix(s ^ e)


cdef inline uint64_t fnv_fold(uint64_t h, uint64_t v) nogil:
    cdef int i
    for i in range(8):
        h = (h ^ ((v >> (8 * i)) & 0xFF)) * <uint64_t>0x100000001B3
    return h


cdef inline int popcount(uint64_t x) nogil:
    cdef int c = 0
    while x:
        x &= x - 1
        c += 1
    return c


cdef inline int bit_length(uint64_t x) nogil:
    cdef int n = 0
    while x:
        x >>= 1
        n += 1
    return n


cdef inline int lowest_bit(uint64_t x) nogil:
    cdef int i = 0
    while not (x & 1):
        x >>= 1
        i += 1
    return i


cdef inline int64_t ceil_div(int64_t a, int64_t b) nogil:
    # callers guarantee a >= 0, b > 0
    return (a + b - 1) // b


cdef inline int64_t t_rel_c(int64_t ident, int t_ex, int scale) nogil:
    return <int64_t>scale * (2 * (bit_length(<uint64_t>ident) - 1) + 6) * t_ex


cdef struct Action:
    int kind
    int port


cdef class _Engine:
    cdef int nA, U, n_nodes, t_ex, rel_scale, pbc_mode, rotations, horizon
    cdef int64_t t_ini, max_rounds
    cdef uint64_t seed
    cdef bint collect_trace
    cdef object cfg, graph, plan_offsets_obj
    cdef int32_t *offsets
    cdef int n_offsets
    # graph (flattened adjacency)
    cdef int *deg
    cdef int *adj_off
    cdef int32_t *nb_node
    cdef int32_t *nb_port
    # per-slot static
    cdef int64_t ids[64]
    cdef uint8_t is_good[64]
    cdef int strategy[64]  # -1 for good
    cdef uint8_t has_core[64]
    cdef uint64_t good_mask, equiv_mask
    # core / shadow state
    cdef int stage[64]
    cdef int64_t length[64]
    cdef int64_t elapsed[64]
    cdef int64_t count[64]
    cdef uint8_t ready[64]
    cdef uint8_t end_mc[64]
    cdef int64_t gid[64]
    cdef uint8_t terminated[64]
    cdef uint8_t lure[64]
    cdef uint64_t R_mask[64]
    cdef uint64_t Sp_mask[64]
    cdef uint64_t Sc_mask[64]
    cdef uint8_t Sc_valid[64]
    cdef uint64_t Pp_mask[64]
    cdef uint64_t Pc_mask[64]
    cdef uint8_t Pc_valid[64]
    cdef uint64_t D_mask[64]
    cdef int64_t min_gid[64]
    cdef uint64_t S_rg[64]
    cdef int64_t aid_entry[64]
    cdef uint8_t awaiting[64]
    cdef uint64_t recv_mask[64]
    # consensus instances, [slot][inst]
    cdef uint8_t pc_active[64][2]
    cdef uint8_t pc_finished[64][2]
    cdef int pc_phases[64][2]
    cdef int pc_ptype[64][2]
    cdef uint64_t pc_pay_a[64][2]
    cdef uint64_t pc_pay_b[64][2]
    cdef uint64_t pc_direct_senders[64][2]
    cdef uint64_t pc_direct_pay[64][2][64]
    cdef int pc_P[64][2]
    cdef int pc_floc[64][2]
    cdef uint64_t pc_cert[64][2]
    cdef uint64_t pc_atoms[64][2]
    cdef uint64_t pc_bits[64][2]
    cdef uint64_t pc_strong[64][2]
    cdef uint64_t pc_out[64][2]
    cdef uint64_t in_senders[64][2]
    cdef int8_t in_ptype[64][2][64]
    cdef uint64_t in_a[64][2][64]
    cdef uint64_t in_b[64][2][64]
    # positions
    cdef int node[64]
    cdef int inport[64]
    # presented snapshot (per round)
    cdef int pr_stage[64]
    cdef int64_t pr_length[64]
    cdef uint8_t pr_ready[64]
    cdef int64_t pr_gid[64]
    cdef uint64_t pr_sc[64]
    cdef int64_t pr_spsize[64]
    cdef uint8_t pr_term[64]
    cdef int pr_pt[64][2]
    cdef uint64_t pr_pa[64][2]
    cdef uint64_t pr_pb[64][2]
    # occupancy
    cdef int *occ_head
    cdef int occ_next[64]
    cdef int ent_slots[64]
    # committed actions
    cdef Action committed[64]
    cdef uint8_t has_commit[64]
    # bookkeeping
    cdef int64_t rnd
    cdef uint64_t fingerprint
    cdef object events, trace, term_rounds, oracle_cache

    def __cinit__(self, cfg):
        self.offsets = NULL
        self.deg = NULL
        self.adj_off = NULL
        self.nb_node = NULL
        self.nb_port = NULL
        self.occ_head = NULL

    def __dealloc__(self):
        free(self.offsets)
        free(self.deg)
        free(self.adj_off)
        free(self.nb_node)
        free(self.nb_port)
        free(self.occ_head)

    def __init__(self, cfg):
        validate_config(cfg)
        self.cfg = cfg
        self.graph = cfg.graph
        g = cfg.graph
        self.n_nodes = g.node_count
        self.t_ex = cfg.plan.t_ex
        self.rel_scale = cfg.rel_scale
        self.pbc_mode = cfg.pbc_mode
        self.rotations = cfg.rotations
        self.horizon = 2 + 3 * cfg.rotations
        self.t_ini = cfg.t_ini
        self.max_rounds = cfg.max_rounds
        self.seed = <uint64_t>(cfg.seed & <uint64_t>0xFFFFFFFFFFFFFFFF)
        self.collect_trace = cfg.collect_trace

        offs = cfg.plan.offsets
        self.n_offsets = len(offs)
        self.offsets = <int32_t*>malloc(max(1, self.n_offsets) * sizeof(int32_t))
        cdef int i
        for i in range(self.n_offsets):
            self.offsets[i] = offs[i]

        cdef int total = 0
        self.deg = <int*>malloc(self.n_nodes * sizeof(int))
        self.adj_off = <int*>malloc((self.n_nodes + 1) * sizeof(int))
        for i in range(self.n_nodes):
            self.deg[i] = g.degree(i)
            self.adj_off[i] = total
            total += self.deg[i]
        self.adj_off[self.n_nodes] = total
        self.nb_node = <int32_t*>malloc(max(1, total) * sizeof(int32_t))
        self.nb_port = <int32_t*>malloc(max(1, total) * sizeof(int32_t))
        cdef int p
        for i in range(self.n_nodes):
            for p in range(self.deg[i]):
                w, rp = g.adjacency[i][p]
                self.nb_node[self.adj_off[i] + p] = w
                self.nb_port[self.adj_off[i] + p] = rp
        self.occ_head = <int*>malloc(self.n_nodes * sizeof(int))

        good_ids = tuple(sorted(cfg.good_ids))
        byz = dict(cfg.byz_strategies)
        all_ids = sorted(tuple(good_ids) + tuple(byz))
        self.nA = len(all_ids)
        self.U = self.nA + adv.PHANTOM_COUNT
        self.good_mask = 0
        self.equiv_mask = 0
        cdef int s
        for s in range(self.nA):
            ident = all_ids[s]
            self.ids[s] = ident
            if ident in byz:
                self.is_good[s] = 0
                self.strategy[s] = byz[ident]
                self.has_core[s] = 1 if adv.uses_shadow(byz[ident]) else 0
                if byz[ident] == EQUIVOCATOR:
                    self.equiv_mask |= <uint64_t>1 << s
            else:
                self.is_good[s] = 1
                self.strategy[s] = -1
                self.has_core[s] = 1
                self.good_mask |= <uint64_t>1 << s
            # core init (new_core)
            self.stage[s] = CID
            self.length[s] = cfg.t_ini
            self.elapsed[s] = 0
            self.count[s] = 0
            self.ready[s] = 0
            self.end_mc[s] = 0
            self.gid[s] = GID_INF
            self.terminated[s] = 0
            self.lure[s] = 1 if (not self.is_good[s]
                                 and self.strategy[s] == LURE) else 0
            self.R_mask[s] = 0
            self.Sp_mask[s] = <uint64_t>1 << s
            self.Sc_valid[s] = 0
            self.Sc_mask[s] = 0
            self.Pp_mask[s] = 0
            self.Pc_valid[s] = 0
            self.Pc_mask[s] = 0
            self.D_mask[s] = 0
            self.min_gid[s] = GID_INF
            self.S_rg[s] = 0
            self.aid_entry[s] = -1
            self.awaiting[s] = 0
            self.recv_mask[s] = 0
            self.node[s] = cfg.start_nodes[ident]
            self.inport[s] = 0
            memset(&self.pc_active[s][0], 0, 2)
            memset(&self.pc_finished[s][0], 0, 2)
        self.events = []
        self.trace = [] if cfg.collect_trace else None
        self.term_rounds = {}
        self.oracle_cache = {}
        self.fingerprint = <uint64_t>0xCBF29CE484222325

    # -- helpers -----------------------------------------------------------

    cdef inline int slot_of_id(self, int64_t ident) nogil:
        cdef int lo = 0, hi = self.nA - 1, mid
        while lo <= hi:
            mid = (lo + hi) >> 1
            if self.ids[mid] == ident:
                return mid
            if self.ids[mid] < ident:
                lo = mid + 1
            else:
                hi = mid - 1
        return -1

    cdef void emit(self, int kind, int s, object a, object b, object c):
        self.events.append((kind, self.rnd, self.ids[s], a, b, c))

    cdef inline int rel_port(self, int64_t ident, int64_t t, int degree,
                             int inp) nogil:
        cdef int t_ex = self.t_ex
        if t_ex == 0 or degree == 0:
            return 0
        cdef int64_t u = t - 1
        cdef int bl = bit_length(<uint64_t>ident)
        cdef int64_t nblocks = 2 * bl + 2
        cdef int64_t b = (u // (2 * t_ex)) % nblocks
        cdef bint active
        if b >= 2 * bl:
            active = b == 2 * bl + 1
        else:
            active = (ident >> (bl - 1 - (b >> 1))) & 1
        if not active:
            return 0
        cdef int v = <int>(u % (2 * t_ex))
        cdef int p0, q
        if v < t_ex:
            p0 = 1 if (v == 0 or inp == 0) else inp
            return ((p0 + self.offsets[v] - 1) % degree) + 1
        if v == t_ex:
            return inp if inp != 0 else 1
        p0 = inp if inp != 0 else 1
        q = (p0 - 1 - self.offsets[2 * t_ex - v]) % degree
        if q < 0:
            q += degree
        return q + 1

    cdef inline Action rel_action(self, int s, int64_t ident, int deg,
                                  int inp) nogil:
        cdef Action a
        cdef int port = self.rel_port(ident, self.elapsed[s], deg, inp)
        if port == 0:
            a.kind = K_STAY
            a.port = 0
        else:
            a.kind = K_MOVE
            a.port = port
        return a

    # -- presented snapshot --------------------------------------------------

    cdef void build_presented(self, int64_t max_good_length, int64_t min_id,
                              uint64_t all_real_mask):
        cdef int s, j, inst
        cdef uint64_t h, hs
        for s in range(self.nA):
            if self.is_good[s] or self.has_core[s]:
                self.pr_stage[s] = self.stage[s]
                self.pr_length[s] = self.length[s]
                self.pr_ready[s] = self.ready[s]
                self.pr_gid[s] = self.gid[s]
                self.pr_sc[s] = self.Sc_mask[s] if self.Sc_valid[s] else 0
                self.pr_spsize[s] = popcount(self.Sp_mask[s])
                self.pr_term[s] = self.terminated[s]
                for inst in range(2):
                    if self.pc_active[s][inst]:
                        self.pr_pt[s][inst] = self.pc_ptype[s][inst]
                        self.pr_pa[s][inst] = self.pc_pay_a[s][inst]
                        self.pr_pb[s][inst] = self.pc_pay_b[s][inst]
                    else:
                        self.pr_pt[s][inst] = P_NONE
                continue
            self.pr_pt[s][0] = P_NONE
            self.pr_pt[s][1] = P_NONE
            if self.strategy[s] == SILENT:
                self.pr_stage[s] = CID
                self.pr_length[s] = self.t_ini
                self.pr_ready[s] = 0
                self.pr_gid[s] = GID_INF
                self.pr_sc[s] = 0
                self.pr_spsize[s] = 1
                self.pr_term[s] = 0
            elif self.strategy[s] == LIAR:
                h = h3(self.seed, 1, <uint64_t>self.ids[s],
                       <uint64_t>self.rnd)
                self.pr_stage[s] = <int>(h % 4)
                self.pr_length[s] = self.t_ini << (
                    h3(self.seed, 2, <uint64_t>self.ids[s],
                       <uint64_t>self.rnd) % 10)
                hs = h3(self.seed, 3, <uint64_t>self.ids[s],
                        <uint64_t>self.rnd)
                self.pr_sc[s] = 0
                for j in range(self.nA):
                    if (hs >> (j % 64)) & 1:
                        self.pr_sc[s] |= <uint64_t>1 << j
                self.pr_gid[s] = min_id if (h >> 8) & 1 else GID_INF
                self.pr_spsize[s] = 1 + <int64_t>(
                    h3(self.seed, 4, <uint64_t>self.ids[s],
                       <uint64_t>self.rnd) % <uint64_t>self.nA)
                self.pr_ready[s] = <uint8_t>((h >> 9) & 1)
                self.pr_term[s] = <uint8_t>((h >> 10) & 1)
            else:  # IMPOSTOR
                self.pr_stage[s] = MG
                self.pr_length[s] = max_good_length
                self.pr_ready[s] = 1
                self.pr_gid[s] = 0  # FAKE_GID
                self.pr_sc[s] = all_real_mask
                self.pr_spsize[s] = self.nA
                self.pr_term[s] = 0

    # -- consensus ----------------------------------------------------------

    cdef void pcons_start(self, int s, int inst, uint64_t input_mask):
        self.pc_active[s][inst] = 1
        self.pc_finished[s][inst] = 0
        self.pc_phases[s][inst] = 0
        self.pc_ptype[s][inst] = P_SET
        self.pc_pay_a[s][inst] = input_mask
        self.pc_pay_b[s][inst] = 0
        self.in_senders[s][inst] = 0

    cdef void pcons_phase_end(self, int s, int inst) except *:
        cdef int q = self.pc_phases[s][inst] + 1
        cdef uint64_t senders = self.in_senders[s][inst] | (<uint64_t>1 << s)
        # self-delivery uses the current broadcast payload
        cdef int self_pt = self.pc_ptype[s][inst]
        cdef uint64_t self_pa = self.pc_pay_a[s][inst]
        cdef uint64_t self_pb = self.pc_pay_b[s][inst]
        cdef int j, a, total, P, floc, tau, threshold, c, sub, r, king, idx
        cdef uint64_t m, rem, keys, atoms, bits, strong, ones, unsure
        cdef uint64_t abit, d1m, dbm, setm, kset
        cdef int u1, d1, dbot, d0, nbit
        cdef int cnt[64]
        if q == 1:
            self.pc_direct_senders[s][inst] = senders
            rem = senders
            while rem:
                j = lowest_bit(rem)
                rem &= rem - 1
                if j == s:
                    self.pc_direct_pay[s][inst][j] = (
                        self_pa if self_pt == P_SET else 0)
                else:
                    self.pc_direct_pay[s][inst][j] = (
                        self.in_a[s][inst][j]
                        if self.in_ptype[s][inst][j] == P_SET else 0)
            # broadcast an echo of the direct messages (keys matter)
            self.pc_ptype[s][inst] = P_ECHO
            self.pc_pay_a[s][inst] = senders
            self.pc_pay_b[s][inst] = 0
        elif q == 2:
            P = popcount(self.pc_direct_senders[s][inst])
            floc = (P - 1) // 3
            self.pc_P[s][inst] = P
            self.pc_floc[s][inst] = floc
            threshold = <int>ceil_div(2 * P, 3)
            for j in range(self.U):
                cnt[j] = 0
            rem = senders
            while rem:
                j = lowest_bit(rem)
                rem &= rem - 1
                if j == s:
                    keys = self_pa if self_pt == P_ECHO else 0
                else:
                    keys = (self.in_a[s][inst][j]
                            if self.in_ptype[s][inst][j] == P_ECHO else 0)
                while keys:
                    a = lowest_bit(keys)
                    keys &= keys - 1
                    cnt[a] += 1
            m = 0
            for j in range(self.U):
                if cnt[j] >= threshold:
                    m |= <uint64_t>1 << j
            self.pc_cert[s][inst] = m if m else (<uint64_t>1 << s)
            atoms = 0
            rem = self.pc_direct_senders[s][inst]
            while rem:
                j = lowest_bit(rem)
                rem &= rem - 1
                atoms |= self.pc_direct_pay[s][inst][j]
            self.pc_atoms[s][inst] = atoms
            bits = 0
            rem = atoms
            while rem:
                a = lowest_bit(rem)
                rem &= rem - 1
                abit = <uint64_t>1 << a
                c = 0
                m = self.pc_direct_senders[s][inst]
                while m:
                    j = lowest_bit(m)
                    m &= m - 1
                    if self.pc_direct_pay[s][inst][j] & abit:
                        c += 1
                if c >= floc + 1:
                    bits |= abit
            self.pc_bits[s][inst] = bits
            self.pc_strong[s][inst] = MASKALL
            self.pc_ptype[s][inst] = P_SET
            self.pc_pay_a[s][inst] = bits & atoms
            self.pc_pay_b[s][inst] = 0
        else:
            sub = (q - 3) % 3
            r = (q - 3) // 3
            tau = self.pc_P[s][inst] - self.pc_floc[s][inst]
            total = popcount(senders)
            atoms = self.pc_atoms[s][inst]
            if sub == 0:
                ones = 0
                unsure = 0
                rem = atoms
                while rem:
                    a = lowest_bit(rem)
                    rem &= rem - 1
                    abit = <uint64_t>1 << a
                    u1 = 0
                    m = senders
                    while m:
                        j = lowest_bit(m)
                        m &= m - 1
                        if j == s:
                            setm = self_pa if self_pt == P_SET else 0
                        else:
                            setm = (self.in_a[s][inst][j]
                                    if self.in_ptype[s][inst][j] == P_SET
                                    else 0)
                        if setm & abit:
                            u1 += 1
                    if u1 >= tau:
                        ones |= abit
                    elif total - u1 < tau:
                        unsure |= abit
                self.pc_ptype[s][inst] = P_TAGGED
                self.pc_pay_a[s][inst] = ones
                self.pc_pay_b[s][inst] = unsure
            elif sub == 1:
                bits = self.pc_bits[s][inst]
                strong = self.pc_strong[s][inst]
                rem = atoms
                while rem:
                    a = lowest_bit(rem)
                    rem &= rem - 1
                    abit = <uint64_t>1 << a
                    d1 = 0
                    dbot = 0
                    m = senders
                    while m:
                        j = lowest_bit(m)
                        m &= m - 1
                        if j == s:
                            if self_pt == P_TAGGED:
                                d1m = self_pa
                                dbm = self_pb
                            elif self_pt == P_SET:
                                d1m = self_pa
                                dbm = 0
                            else:
                                d1m = 0
                                dbm = 0
                        elif self.in_ptype[s][inst][j] == P_TAGGED:
                            d1m = self.in_a[s][inst][j]
                            dbm = self.in_b[s][inst][j]
                        elif self.in_ptype[s][inst][j] == P_SET:
                            d1m = self.in_a[s][inst][j]
                            dbm = 0
                        else:
                            d1m = 0
                            dbm = 0
                        if d1m & abit:
                            d1 += 1
                        elif dbm & abit:
                            dbot += 1
                    d0 = total - d1 - dbot
                    nbit = 1 if d1 > d0 else 0
                    if nbit:
                        bits |= abit
                    else:
                        bits &= ~abit
                    if (d1 if nbit else d0) >= tau:
                        strong |= abit
                    else:
                        strong &= ~abit
                self.pc_bits[s][inst] = bits
                self.pc_strong[s][inst] = strong
                self.pc_ptype[s][inst] = P_SET
                self.pc_pay_a[s][inst] = bits & atoms
                self.pc_pay_b[s][inst] = 0
            else:
                c = popcount(self.pc_cert[s][inst])
                idx = r % c
                rem = self.pc_cert[s][inst]
                while True:
                    king = lowest_bit(rem)
                    if idx == 0:
                        break
                    rem &= rem - 1
                    idx -= 1
                if king == s:
                    kset = self_pa if self_pt == P_SET else 0
                elif senders & (<uint64_t>1 << king):
                    kset = (self.in_a[s][inst][king]
                            if self.in_ptype[s][inst][king] == P_SET else 0)
                else:
                    kset = 0
                bits = self.pc_bits[s][inst]
                strong = self.pc_strong[s][inst]
                rem = atoms & ~strong
                while rem:
                    a = lowest_bit(rem)
                    rem &= rem - 1
                    abit = <uint64_t>1 << a
                    if kset & abit:
                        bits |= abit
                    else:
                        bits &= ~abit
                self.pc_bits[s][inst] = bits
                self.pc_ptype[s][inst] = P_SET
                self.pc_pay_a[s][inst] = bits & atoms
                self.pc_pay_b[s][inst] = 0
            if q == self.horizon:
                self.pc_finished[s][inst] = 1
                self.pc_out[s][inst] = self.pc_bits[s][inst] & atoms
        self.pc_phases[s][inst] = q

    # -- adversary payload forgery -------------------------------------------

    cdef void equiv_payload(self, int64_t ident, int64_t recipient, int tag,
                            int phase, int *ptype, uint64_t *pa,
                            uint64_t *pb) nogil:
        cdef uint64_t h
        cdef int j
        cdef uint64_t m = 0
        if phase == 1:
            ptype[0] = P_SET
            pa[0] = (<uint64_t>1 << self.U) - 1 if self.U < 64 else MASKALL
            pb[0] = 0
            return
        if phase == 2:
            h = h5(self.seed, 6, <uint64_t>ident, <uint64_t>recipient,
                   <uint64_t>tag, <uint64_t>phase)
            for j in range(self.U):
                if (h >> (j % 64)) & 1:
                    m |= <uint64_t>1 << j
            ptype[0] = P_ECHO
            pa[0] = m
            pb[0] = 0
            return
        h = h5(self.seed, 8, <uint64_t>ident, <uint64_t>recipient,
               <uint64_t>tag, <uint64_t>phase)
        for j in range(self.U):
            if (h >> (j % 64)) & 1:
                m |= <uint64_t>1 << j
        ptype[0] = P_SET
        pa[0] = m
        pb[0] = 0

    # -- oracle referee -------------------------------------------------------

    cdef tuple oracle_lookup(self, int s):
        key = (self.aid_entry[s], self.length[s])
        cdef int j
        cdef uint64_t union_m, inter_m, choice, out_s, out_p, rem
        if key not in self.oracle_cache:
            members = [j for j in range(self.nA)
                       if self.is_good[j] and self.awaiting[j]
                       and self.aid_entry[j] == self.aid_entry[s]
                       and self.length[j] == self.length[s]]
            if not members:
                self.oracle_cache[key] = None
            else:
                outs = []
                for inst in range(2):
                    union_m = 0
                    inter_m = MASKALL
                    for j in members:
                        m = self.Sp_mask[j] if inst == 0 else self.Pp_mask[j]
                        union_m |= m
                        inter_m &= m
                    choice = 0
                    rem = union_m & ~inter_m
                    while rem:
                        j = lowest_bit(rem)
                        rem &= rem - 1
                        if h3(self.seed, 9, <uint64_t>inst, <uint64_t>j) & 1:
                            choice |= <uint64_t>1 << j
                    outs.append(inter_m | choice)
                self.oracle_cache[key] = (outs[0], outs[1])
        got = self.oracle_cache[key]
        if got is None:
            return (self.Sp_mask[s], self.Pp_mask[s])
        return got

    # -- agent step -----------------------------------------------------------

    cdef Action step(self, int s, bint record, int n_ent) except *:
        """One Compute for slot s; entries are ent_slots[0..n_ent)."""
        cdef Action act
        cdef int i, j, e, deg, inp
        cdef int64_t mg, gval
        cdef uint64_t sgid_any
        cdef int n_gids
        cdef int64_t gids[64]
        cdef int gcnt[64]
        cdef int64_t thresh
        if self.terminated[s]:
            raise ProtocolError("step on terminated agent")
        deg = self.deg[self.node[s]]
        inp = self.inport[s]
        if self.stage[s] != CID:
            # detect reliable groups
            n_gids = 0
            for i in range(n_ent):
                e = self.ent_slots[i]
                gval = self.pr_gid[e]
                if gval == GID_INF:
                    continue
                for j in range(n_gids):
                    if gids[j] == gval:
                        gcnt[j] += 1
                        break
                else:
                    gids[n_gids] = gval
                    gcnt[n_gids] = 1
                    n_gids += 1
            thresh = ceil_div(popcount(self.Sp_mask[s]), 8)
            mg = GID_INF
            sgid_any = 0
            for j in range(n_gids):
                if gcnt[j] >= thresh:
                    sgid_any = 1
                    if gids[j] < mg:
                        mg = gids[j]
            if sgid_any:
                self.min_gid[s] = mg
            if sgid_any and self.gid[s] > self.min_gid[s]:
                self.S_rg[s] = 0
                for i in range(n_ent):
                    e = self.ent_slots[i]
                    if self.pr_gid[e] == self.min_gid[s]:
                        self.S_rg[s] |= <uint64_t>1 << e
                act.kind = K_FOLLOW
                act.port = 0
                return act
            if self.gid[s] != GID_INF:
                self.elapsed[s] += 1
                if self.length[s] == self.elapsed[s]:
                    act.kind = K_TERM
                    act.port = 0
                    return act
                return self.rel_action(s, self.gid[s], deg, inp)
        self.elapsed[s] += 1
        if self.stage[s] == CID:
            return self.collect_id(s, record, n_ent, deg, inp)
        if self.stage[s] == MC:
            return self.make_candidate(s, record, n_ent, deg, inp)
        if self.stage[s] == AID:
            return self.agree_id(s, record, n_ent, deg, inp)
        return self.make_group(s, record, n_ent, deg, inp)

    cdef inline void absorb_ready(self, int s, int n_ent) nogil:
        cdef int i, e
        for i in range(n_ent):
            e = self.ent_slots[i]
            if self.pr_ready[e]:
                self.R_mask[s] |= <uint64_t>1 << e

    cdef Action collect_id(self, int s, bint record, int n_ent, int deg,
                           int inp) except *:
        cdef Action act
        cdef int i
        act.kind = K_STAY
        act.port = 0
        self.absorb_ready(s, n_ent)
        if 2 * (t_rel_c(self.ids[s], self.t_ex, self.rel_scale) + 1) \
                > self.length[s]:
            if self.length[s] == self.elapsed[s]:
                self.elapsed[s] = 0
                self.length[s] *= 2
            return act
        for i in range(n_ent):
            self.Sp_mask[s] |= <uint64_t>1 << self.ent_slots[i]
        if self.length[s] > self.elapsed[s]:
            return self.rel_action(s, self.ids[s], deg, inp)
        self.elapsed[s] = 0
        self.length[s] *= 2
        self.stage[s] = MC
        if record:
            self.emit(EV_STAGE, s, MC, self.length[s], self.Sp_mask[s])
        return act

    cdef Action make_candidate(self, int s, bint record, int n_ent, int deg,
                               int inp) except *:
        cdef Action act
        cdef int qualified = 0
        cdef int sp_n, r_n
        cdef uint64_t rem
        cdef int j
        act.kind = K_STAY
        act.port = 0
        self.absorb_ready(s, n_ent)
        sp_n = popcount(self.Sp_mask[s])
        if self.elapsed[s] == 1 and not self.ready[s]:
            rem = self.Sp_mask[s]
            while rem:
                j = lowest_bit(rem)
                rem &= rem - 1
                if self.length[s] >= 4 * (
                        t_rel_c(self.ids[j], self.t_ex, self.rel_scale) + 1):
                    qualified += 1
            r_n = popcount(self.R_mask[s])
            if 9 * qualified >= 8 * sp_n or 9 * r_n >= 4 * sp_n:
                self.ready[s] = 1
                self.R_mask[s] |= <uint64_t>1 << s
                if record:
                    self.emit(EV_READY, s, 0, 0, 0)
        if self.elapsed[s] == 1 and 9 * popcount(self.R_mask[s]) >= 6 * sp_n:
            if not self.end_mc[s]:
                self.end_mc[s] = 1
                if record:
                    self.emit(EV_ENDMC, s, 0, 0, 0)
        if self.length[s] > self.elapsed[s]:
            return self.rel_action(s, self.ids[s], deg, inp)
        self.elapsed[s] = 0
        self.length[s] *= 2
        if self.end_mc[s]:
            self.stage[s] = AID
            self.aid_entry[s] = self.rnd
            if record:
                self.emit(EV_STAGE, s, AID, self.length[s], self.Sp_mask[s])
        return act

    cdef void collect_pcons(self, int s, int n_ent, bint forge) nogil:
        cdef int i, e, pt_s, pt_p
        cdef uint64_t pa_s, pb_s, pa_p, pb_p, ebit
        cdef int64_t rid = self.ids[s]
        for i in range(n_ent):
            e = self.ent_slots[i]
            ebit = <uint64_t>1 << e
            if e == s or (self.recv_mask[s] & ebit):
                continue
            if self.pr_length[e] != self.length[s]:
                continue
            if self.pr_stage[e] != AID and self.pr_stage[e] != MG:
                continue
            if forge and (self.equiv_mask & ebit):
                self.equiv_payload(self.ids[e], rid, 0,
                                   self.pc_phases[s][0] + 1,
                                   &pt_s, &pa_s, &pb_s)
                self.equiv_payload(self.ids[e], rid, 1,
                                   self.pc_phases[s][1] + 1,
                                   &pt_p, &pa_p, &pb_p)
            else:
                pt_s = self.pr_pt[e][0]
                pa_s = self.pr_pa[e][0]
                pb_s = self.pr_pb[e][0]
                pt_p = self.pr_pt[e][1]
                pa_p = self.pr_pa[e][1]
                pb_p = self.pr_pb[e][1]
            if pt_s == P_NONE and pt_p == P_NONE:
                continue
            self.recv_mask[s] |= ebit
            if pt_s != P_NONE:
                self.in_senders[s][0] |= ebit
                self.in_ptype[s][0][e] = <int8_t>pt_s
                self.in_a[s][0][e] = pa_s
                self.in_b[s][0][e] = pb_s
            if pt_p != P_NONE:
                self.in_senders[s][1] |= ebit
                self.in_ptype[s][1][e] = <int8_t>pt_p
                self.in_a[s][1][e] = pa_p
                self.in_b[s][1][e] = pb_p

    cdef Action agree_id(self, int s, bint record, int n_ent, int deg,
                         int inp) except *:
        cdef Action act
        cdef int i, e, phases
        cdef uint64_t s_out, p_out
        act.kind = K_STAY
        act.port = 0
        if self.count[s] == 0:
            for i in range(n_ent):
                e = self.ent_slots[i]
                if self.pr_length[e] == self.length[s] \
                        and self.pr_stage[e] == AID:
                    self.Pp_mask[s] |= <uint64_t>1 << e
        elif not self.awaiting[s] and self.pc_active[s][0] \
                and not self.pc_finished[s][0] \
                and self.length[s] > self.elapsed[s]:
            self.collect_pcons(s, n_ent, self.is_good[s])
        if self.length[s] > self.elapsed[s]:
            return self.rel_action(s, self.ids[s], deg, inp)
        self.elapsed[s] = 0
        if self.count[s] == 0:
            if self.pbc_mode == PBC_ORACLE:
                self.awaiting[s] = 1
            else:
                self.pcons_start(s, 0, self.Sp_mask[s])
                self.pcons_start(s, 1, self.Pp_mask[s])
            if record:
                self.emit(EV_PCONS_INIT, s, self.Sp_mask[s],
                          self.Pp_mask[s], 0)
        elif self.awaiting[s]:
            s_out, p_out = self.oracle_lookup(s)
            self.awaiting[s] = 0
            self.finish_consensus(s, record, s_out, p_out, 1)
        elif not self.pc_finished[s][0]:
            self.pcons_phase_end(s, 0)
            self.pcons_phase_end(s, 1)
            self.in_senders[s][0] = 0
            self.in_senders[s][1] = 0
            self.recv_mask[s] = 0
            if self.pc_finished[s][0] and self.pc_finished[s][1]:
                self.finish_consensus(s, record, self.pc_out[s][0],
                                      self.pc_out[s][1], self.horizon)
        self.count[s] += 1
        return act

    cdef void finish_consensus(self, int s, bint record, uint64_t s_out,
                               uint64_t p_out, int phases) except *:
        self.Sc_mask[s] = s_out
        self.Sc_valid[s] = 1
        self.Pc_mask[s] = p_out
        self.Pc_valid[s] = 1
        self.stage[s] = MG
        if p_out == 0:
            raise ProtocolError("consensus produced an empty common ID set")
        if record:
            self.emit(EV_PCONS_DONE, s, s_out, p_out, phases)
            self.emit(EV_STAGE, s, MG, self.length[s], self.Sp_mask[s])

    cdef Action make_group(self, int s, bint record, int n_ent, int deg,
                           int inp) except *:
        cdef Action act
        cdef int i, e, idx, cnt
        cdef uint64_t rem, target_bit, dmask
        cdef int target
        act.kind = K_STAY
        act.port = 0
        if 2 * self.elapsed[s] <= self.length[s]:
            return self.rel_action(s, self.ids[s], deg, inp)
        if self.length[s] > self.elapsed[s]:
            cnt = popcount(self.Pc_mask[s])
            idx = <int>(self.count[s] % cnt)
            rem = self.Pc_mask[s]
            while True:
                target = lowest_bit(rem)
                if idx == 0:
                    break
                rem &= rem - 1
                idx -= 1
            # target is a universe index; only real agents can be present
            for i in range(n_ent):
                e = self.ent_slots[i]
                if e == target and not (self.lure[s] and target == s):
                    return act
            return self.rel_action(s, self.ids[s], deg, inp)
        self.elapsed[s] = 0
        self.count[s] += 1
        dmask = 0
        for i in range(n_ent):
            e = self.ent_slots[i]
            if 9 * popcount(self.pr_sc[e]) >= 8 * self.pr_spsize[e] \
                    and self.pr_length[e] == self.length[s] \
                    and self.pr_sc[e] == (self.Sc_mask[s]
                                          if self.Sc_valid[s] else 0) \
                    and self.pr_stage[e] == MG:
                dmask |= <uint64_t>1 << e
        self.D_mask[s] = dmask
        if 9 * popcount(self.Sc_mask[s]) >= 8 * popcount(self.Sp_mask[s]) \
                and 3 * popcount(dmask) >= popcount(self.Sc_mask[s]):
            self.gid[s] = self.ids[lowest_bit(dmask)]
            if record:
                self.emit(EV_GID, s, self.gid[s], dmask, 0)
        return act

    # -- round loop -----------------------------------------------------------

    cdef Action resolve_follow(self, int s):
        cdef uint64_t rem = self.S_rg[s]
        cdef int n = popcount(rem)
        cdef int e, term_n = 0, best_port = 0, best_n = 0, j
        cdef int ports[64]
        cdef int pcnt[64]
        cdef int n_ports = 0
        cdef Action out
        cdef Action v
        while rem:
            e = lowest_bit(rem)
            rem &= rem - 1
            if self.pr_term[e]:
                term_n += 1
                continue
            if self.has_commit[e]:
                v = self.committed[e]
            else:
                v.kind = K_STAY
                v.port = 0
            if v.kind == K_TERM:
                term_n += 1
            elif v.kind == K_MOVE:
                for j in range(n_ports):
                    if ports[j] == v.port:
                        pcnt[j] += 1
                        break
                else:
                    ports[n_ports] = v.port
                    pcnt[n_ports] = 1
                    n_ports += 1
        if 2 * term_n > n:
            out.kind = K_TERM
            out.port = 0
            return out
        # smallest port wins ties (ascending scan with strict improvement)
        cdef int i, key_p, key_c
        for i in range(1, n_ports):
            key_p = ports[i]
            key_c = pcnt[i]
            j = i - 1
            while j >= 0 and ports[j] > key_p:
                ports[j + 1] = ports[j]
                pcnt[j + 1] = pcnt[j]
                j -= 1
            ports[j + 1] = key_p
            pcnt[j + 1] = key_c
        best_n = 0
        best_port = 0
        for j in range(n_ports):
            if pcnt[j] > best_n:
                best_n = pcnt[j]
                best_port = ports[j]
        if 2 * best_n > n:
            out.kind = K_MOVE
            out.port = best_port
            return out
        out.kind = K_STAY
        out.port = 0
        return out

    cdef int action_code(self, Action a, bint followed) nogil:
        if a.kind == K_TERM:
            return ACT_FOLLOW_TERMINATE if followed else ACT_TERMINATE
        if a.kind == K_MOVE:
            return (ACT_FOLLOW_MOVE_BASE if followed else ACT_MOVE_BASE) \
                + a.port
        return ACT_FOLLOW_STAY if followed else ACT_STAY

    def execute(self):
        cdef int s, i, j, v, deg, n_ent, e, code
        cdef int64_t rnd, max_good_length, min_id
        cdef uint64_t all_real_mask = (<uint64_t>1 << self.nA) - 1
        cdef Action act, sact
        cdef uint64_t h
        cdef bint gathered = 0
        cdef int64_t rounds = 0
        cdef int intents[64]
        cdef int n_intents
        cdef int follow_order[64]
        cdef uint8_t followed[64]
        cdef int64_t row[15]
        min_id = self.ids[0]
        trace = self.trace
        for rnd in range(self.max_rounds):
            self.rnd = rnd
            # Look
            max_good_length = 0
            for s in range(self.nA):
                if self.is_good[s] and self.length[s] > max_good_length:
                    max_good_length = self.length[s]
            self.build_presented(max_good_length, min_id, all_real_mask)
            for v in range(self.n_nodes):
                self.occ_head[v] = -1
            for s in range(self.nA - 1, -1, -1):
                self.occ_next[s] = self.occ_head[self.node[s]]
                self.occ_head[self.node[s]] = s

            # Compute sub-phase 1
            n_intents = 0
            for s in range(self.nA):
                self.has_commit[s] = 0
                followed[s] = 0
            for s in range(self.nA):
                v = self.node[s]
                deg = self.deg[v]
                n_ent = 0
                e = self.occ_head[v]
                while e != -1:
                    self.ent_slots[n_ent] = e
                    n_ent += 1
                    e = self.occ_next[e]
                if self.is_good[s]:
                    if self.terminated[s]:
                        self.committed[s].kind = K_STAY
                        self.committed[s].port = 0
                        self.has_commit[s] = 1
                        continue
                    act = self.step(s, True, n_ent)
                    if act.kind == K_FOLLOW:
                        intents[n_intents] = s
                        n_intents += 1
                    else:
                        self.committed[s] = act
                        self.has_commit[s] = 1
                else:
                    sact.kind = K_STAY
                    sact.port = 0
                    if self.has_core[s] and not self.terminated[s]:
                        sact = self.step(s, False, n_ent)
                        if sact.kind == K_FOLLOW:
                            sact.kind = K_STAY
                            sact.port = 0
                        if sact.kind == K_TERM:
                            self.terminated[s] = 1
                    if self.strategy[s] == SILENT \
                            or self.strategy[s] == LIAR \
                            or self.strategy[s] == IMPOSTOR:
                        act.kind = K_STAY
                        act.port = 0
                    elif self.strategy[s] == DISRUPTOR and self.has_core[s] \
                            and self.gid[s] != GID_INF \
                            and not self.terminated[s]:
                        h = h3(self.seed, 5, <uint64_t>self.ids[s],
                               <uint64_t>rnd)
                        if (h & 1) or deg == 0:
                            act.kind = K_STAY
                            act.port = 0
                        else:
                            act.kind = K_MOVE
                            act.port = 1 + <int>((h >> 1) % <uint64_t>deg)
                    else:
                        act = sact
                    self.committed[s] = act
                    self.has_commit[s] = 1

            # Compute sub-phase 2: followers, ordered by (min_gid, id)
            for i in range(n_intents):
                follow_order[i] = intents[i]
            for i in range(1, n_intents):
                s = follow_order[i]
                j = i - 1
                while j >= 0 and (
                        self.min_gid[follow_order[j]] > self.min_gid[s]
                        or (self.min_gid[follow_order[j]] == self.min_gid[s]
                            and self.ids[follow_order[j]] > self.ids[s])):
                    follow_order[j + 1] = follow_order[j]
                    j -= 1
                follow_order[j + 1] = s
            for i in range(n_intents):
                s = follow_order[i]
                self.committed[s] = self.resolve_follow(s)
                self.has_commit[s] = 1
                followed[s] = 1

            # trace rows
            for s in range(self.nA):
                code = self.action_code(self.committed[s], followed[s])
                if self.is_good[s] or self.has_core[s]:
                    row[0] = rnd
                    row[1] = self.ids[s]
                    row[2] = self.node[s]
                    if self.is_good[s]:
                        row[3] = self.stage[s]
                        row[4] = self.length[s]
                        row[7] = self.ready[s]
                        row[9] = 0 if self.gid[s] == GID_INF else self.gid[s]
                        row[11] = popcount(self.Sp_mask[s])
                    else:
                        row[3] = self.pr_stage[s]
                        row[4] = self.pr_length[s]
                        row[7] = self.pr_ready[s]
                        row[9] = 0 if self.pr_gid[s] == GID_INF \
                            else self.pr_gid[s]
                        row[11] = self.pr_spsize[s]
                    row[5] = self.elapsed[s]
                    row[6] = self.count[s]
                    row[8] = self.end_mc[s]
                    row[10] = code
                    row[12] = popcount(self.Pp_mask[s])
                    row[13] = popcount(self.Pc_mask[s]) if self.Pc_valid[s] \
                        else 0
                    row[14] = popcount(self.D_mask[s])
                else:
                    row[0] = rnd
                    row[1] = self.ids[s]
                    row[2] = self.node[s]
                    row[3] = self.pr_stage[s]
                    row[4] = self.pr_length[s]
                    row[5] = 0
                    row[6] = 0
                    row[7] = self.pr_ready[s]
                    row[8] = 0
                    row[9] = 0 if self.pr_gid[s] == GID_INF else self.pr_gid[s]
                    row[10] = code
                    row[11] = self.pr_spsize[s]
                    row[12] = 0
                    row[13] = 0
                    row[14] = 0
                for i in range(15):
                    self.fingerprint = fnv_fold(self.fingerprint,
                                                <uint64_t>row[i])
                if trace is not None:
                    trace.append((row[0], row[1], row[2], row[3], row[4],
                                  row[5], row[6], row[7], row[8], row[9],
                                  row[10], row[11], row[12], row[13],
                                  row[14]))

            # Move
            for s in range(self.nA):
                act = self.committed[s]
                if act.kind == K_MOVE:
                    v = self.node[s]
                    i = self.adj_off[v] + act.port - 1
                    self.node[s] = self.nb_node[i]
                    self.inport[s] = self.nb_port[i]
                elif act.kind == K_TERM and self.is_good[s]:
                    if not self.terminated[s]:
                        self.terminated[s] = 1
                        self.term_rounds[self.ids[s]] = rnd
                        self.emit(EV_TERM, s, self.node[s], 0, 0)

            rounds = rnd + 1
            gathered = 1
            for s in range(self.nA):
                if self.is_good[s] and not self.terminated[s]:
                    gathered = 0
                    break
            if gathered:
                break

        # final gathered check
        cdef int final_node = -1
        gathered = 1
        for s in range(self.nA):
            if not self.is_good[s]:
                continue
            if not self.terminated[s]:
                gathered = 0
                break
            if final_node == -1:
                final_node = self.node[s]
            elif self.node[s] != final_node:
                gathered = 0
                break
        return gathered, final_node, rounds

    def result(self, gathered, final_node, rounds):
        from .rendezvous import t_rel as py_t_rel
        phase_counts = {e[2]: e[5] for e in self.events
                        if e[0] == EV_PCONS_DONE}
        max_good_id = max(self.ids[s] for s in range(self.nA)
                          if self.is_good[s])
        nodes = {self.ids[s]: self.node[s] for s in range(self.nA)}
        return SimResult(
            gathered=bool(gathered),
            final_node=final_node if gathered else None,
            rounds=rounds,
            fingerprint=int(self.fingerprint),
            term_rounds=self.term_rounds,
            nodes=nodes,
            events=self.events,
            trace=self.trace,
            phase_counts=phase_counts,
            max_good_id=max_good_id,
            t_rel_max=py_t_rel(max_good_id, self.cfg.plan.t_ex,
                               self.cfg.rel_scale),
        )


def run(cfg):
    """Compiled twin of sim.run; same inputs, same outputs."""
    eng = _Engine(cfg)
    gathered, final_node, rounds = eng.execute()
    return eng.result(gathered, final_node, rounds)

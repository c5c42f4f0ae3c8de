"""Exhaustive adversary search for the distributed consensus protocol.

Verifies Agreement, Validity 1, and Validity 2 for 4 participants (3 good,
1 Byzantine) over the protocol's full phase horizon, by enumerating every
adversary message function over a bounded payload alphabet.  Termination
exactly once is structural: the horizon is a shared protocol constant, so
all good instances finish in the same phase; the search asserts this.

The search space is made tractable by two exact reductions and one sound
over-approximation:

* Atom independence: the protocol treats each (pair_id, value) atom's bit
  independently after phase 2, and phase-1 support is per-atom, so atoms
  are analyzed one at a time.  An atom is characterized by which good
  participants hold it (8 cases) plus the Byzantine proposal bits.
* Echo collapse: of a phase-2 echo payload, only whether it attests the
  Byzantine sender's own phase-1 message can influence any good state
  (good participants are always certified by the three good echoes, and a
  phantom sender can never reach the 2P/3 attestation threshold), so the
  echo choice is a single bit per recipient.
* Adversary strengthening: the per-atom analysis lets the adversary choose
  message presence and atom bits independently per atom, which a real
  adversary (sending one set per recipient per phase) cannot always do.
  Every real execution maps into the searched space, so zero violations
  here implies zero violations for real adversaries.

States are (bit, strong) per good participant; frontiers are 64-bit masks
over the 64 possible joint states, expanded through cached per-phase
transition tables.  The Byzantine per-recipient alphabet is {absent, 0, 1}
in filter phases, {absent, 0, 1, unsure} in tally phases, and a bit per
recipient when acting as king.
"""

from __future__ import annotations

from itertools import product

from .pbc import DEFAULT_ROTATIONS
from .util import ceil_div

ABSENT = -1
_GOOD_IDS = (10, 20, 30)
_BETA_IDS = (5, 15, 25, 35)  # every rank the Byzantine id can take


def _pack(bits, strong):
    s = 0
    for i in range(3):
        s |= bits[i] << i
        s |= strong[i] << (i + 3)
    return s


def _unpack(s):
    bits = [(s >> i) & 1 for i in range(3)]
    strong = [(s >> (i + 3)) & 1 for i in range(3)]
    return bits, strong


_UNSURE = 2


class _Tables:
    """Cached state-transition tables, keyed by the static context."""

    def __init__(self):
        self.cache = {}

    def filter(self, p_vec, f_vec, has):
        """bits vector (0..7) -> mask over the 27 three-valued vectors."""
        key = ("f", p_vec, f_vec, has)
        if key not in self.cache:
            table = [0] * 8
            opts = list(product((ABSENT, 0, 1), repeat=3))
            for b in range(8):
                bits = [(b >> i) & 1 for i in range(3)]
                good_ones = sum(bits)
                mask = 0
                for o in opts:
                    code = 0
                    for i in range(3):
                        if not has[i]:
                            continue
                        tau = p_vec[i] - f_vec[i]
                        total = 3 + (o[i] != ABSENT)
                        u1 = good_ones + (o[i] == 1)
                        if u1 >= tau:
                            code += 3 ** i
                        elif total - u1 < tau:
                            code += _UNSURE * 3 ** i
                    mask |= 1 << code
                table[b] = mask
            self.cache[key] = table
        return self.cache[key]

    def tally(self, p_vec, f_vec, has):
        """three-valued vector (0..26) -> mask over the 64 joint states."""
        key = ("t", p_vec, f_vec, has)
        if key not in self.cache:
            table = [0] * 27
            opts = list(product((ABSENT, 0, 1, _UNSURE), repeat=3))
            for code in range(27):
                tri = [(code // 3 ** i) % 3 for i in range(3)]
                g1 = sum(1 for v in tri if v == 1)
                gbot = sum(1 for v in tri if v == _UNSURE)
                mask = 0
                for o in opts:
                    nb = [0, 0, 0]
                    ns = [1, 1, 1]
                    for i in range(3):
                        if not has[i]:
                            continue
                        tau = p_vec[i] - f_vec[i]
                        total = 3 + (o[i] != ABSENT)
                        d1 = g1 + (o[i] == 1)
                        dbot = gbot + (o[i] == _UNSURE)
                        d0 = total - d1 - dbot
                        nb[i] = 1 if d1 > d0 else 0
                        ns[i] = 1 if (d1 if nb[i] else d0) >= tau else 0
                    mask |= 1 << _pack(nb, ns)
                table[code] = mask
            self.cache[key] = table
        return self.cache[key]

    def king(self, kings, has):
        """kings[i] is a good index 0..2 or the string "byz"."""
        key = ("k", kings, has)
        if key not in self.cache:
            table = [0] * 64
            byz_slots = [i for i in range(3) if kings[i] == "byz"]
            opts = list(product((0, 1), repeat=len(byz_slots))) or [()]
            for s in range(64):
                bits, strong = _unpack(s)
                mask = 0
                for o in opts:
                    kbit = {}
                    for j, i in enumerate(byz_slots):
                        kbit[i] = o[j]
                    nb = list(bits)
                    for i in range(3):
                        if not has[i]:
                            nb[i] = 0
                            continue
                        if strong[i]:
                            continue
                        k = kings[i]
                        nb[i] = kbit[i] if k == "byz" else bits[k]
                    mask |= 1 << _pack(nb, strong)
                table[s] = mask
            self.cache[key] = table
        return self.cache[key]


def exhaustive_check(rotations: int = DEFAULT_ROTATIONS, limit: int = 0) -> list:
    """Search all adversary behaviors; return a list of violation strings.

    ``limit`` stops after that many violations (0 = collect all distinct
    situations that violate, one line each).
    """
    tables = _Tables()
    violations = []
    for presence in product((0, 1), repeat=3):
        p_vec = tuple(3 + x for x in presence)
        f_vec = tuple((p - 1) // 3 for p in p_vec)
        m = sum(presence)
        for ebits in product((0, 1), repeat=3):
            cert_beta = tuple(
                1 if m + ebits[i] >= ceil_div(2 * p_vec[i], 3) else 0
                for i in range(3))
            for beta_id in _BETA_IDS:
                king_seqs = []
                for i in range(3):
                    members = sorted(
                        _GOOD_IDS + ((beta_id,) if cert_beta[i] else ()))
                    seq = []
                    for r in range(rotations):
                        kid = members[r % len(members)]
                        seq.append("byz" if kid == beta_id
                                   else _GOOD_IDS.index(kid))
                    king_seqs.append(tuple(seq))
                for holders in product((0, 1), repeat=3):
                    vio = _search_atom(
                        tables, rotations, p_vec, f_vec, presence,
                        king_seqs, holders)
                    if vio:
                        violations.append(
                            f"presence={presence} ebits={ebits} "
                            f"beta_id={beta_id} holders={holders}: {vio}")
                        if limit and len(violations) >= limit:
                            return violations
    return violations


def _search_atom(tables, rotations, p_vec, f_vec, presence, king_seqs,
                 holders):
    n_holders = sum(holders)
    # initial states over every legal Byzantine phase-1 inclusion choice
    frontier = 0
    for incl in product((0, 1), repeat=3):
        if any(incl[i] and not presence[i] for i in range(3)):
            continue
        has = tuple(1 if (n_holders or incl[i]) else 0 for i in range(3))
        bits = tuple(
            1 if has[i] and n_holders + incl[i] >= f_vec[i] + 1 else 0
            for i in range(3))
        frontier |= 1 << _pack(bits, (1, 1, 1))
    # has vector: an atom a good participant holds is known to all (good
    # phase-1 broadcasts reach everyone); otherwise knowledge follows the
    # adversary's proposals, and the pinned-0 modeling above makes the
    # transition identical to has=1 with a locked 0 bit only when no good
    # holder exists.  Enumerate both knowledge patterns conservatively.
    has_options = set()
    if n_holders:
        has_options.add((1, 1, 1))
    else:
        for incl in product((0, 1), repeat=3):
            if any(incl[i] and not presence[i] for i in range(3)):
                continue
            has_options.add(tuple(incl))
    for has in has_options:
        ftab = tables.filter(p_vec, f_vec, has)
        ttab = tables.tally(p_vec, f_vec, has)
        cur = frontier
        for r in range(rotations):
            kings = tuple(king_seqs[i][r] for i in range(3))
            mid = 0
            rem = cur
            while rem:
                low = rem & -rem
                mid |= ftab[(low.bit_length() - 1) & 7]
                rem ^= low
            cur = 0
            rem = mid
            while rem:
                low = rem & -rem
                cur |= ttab[low.bit_length() - 1]
                rem ^= low
            ktab = tables.king(kings, has)
            nxt = 0
            rem = cur
            while rem:
                low = rem & -rem
                nxt |= ktab[low.bit_length() - 1]
                rem ^= low
            cur = nxt
        rem = cur
        while rem:
            low = rem & -rem
            s = low.bit_length() - 1
            rem ^= low
            bits, _strong = _unpack(s)
            outs = tuple(bits[i] if has[i] else 0 for i in range(3))
            if len(set(outs)) != 1:
                return f"agreement broken, outputs {outs} (has={has})"
            if n_holders == 3 and outs[0] != 1:
                return f"validity 1 broken, unanimous atom decided {outs[0]}"
            if n_holders == 0 and outs[0] != 0:
                return f"validity 2 broken, foreign atom decided {outs[0]}"
    return None

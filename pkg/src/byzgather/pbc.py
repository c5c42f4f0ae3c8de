"""Parallel Byzantine consensus over sets of (pair_id, value) pairs.

Two interchangeable modes:

* ``oracle_decide`` — a referee that enforces the four PBC properties
  directly (Validity 1/2, Agreement, Termination) and decides in one phase.
* ``PconsInstance`` — a distributed reference protocol:

  - phase 1: broadcast the input set;
  - phase 2: broadcast an echo of all phase-1 messages received;
  - end of phase 2: fix P = number of direct phase-1 senders,
    f_loc = (P-1)//3; certify participant j iff at least ceil(2P/3) echoes
    attest a phase-1 message from j; initialize each candidate pair's bit
    to 1 iff at least f_loc+1 direct senders proposed it (so a pair with no
    honest supporter starts unanimously 0 and can never be adopted);
  - then R king rotations of three phases each, king order taken from the
    certified IDs.  Per rotation, with threshold tau = P - f_loc: a filter
    phase (broadcast bits; a bit becomes v only on tau same-value votes,
    otherwise "unsure"), a tally phase (broadcast the three-valued filter
    result; adopt the plurality bit, and mark it "strong" on tau support),
    and a king phase where non-strong bits adopt the king's broadcast.

The rotation count R is a protocol constant shared by every participant,
not derived from the local participant view: a Byzantine sender that
delivers its phase-1 message to only some participants skews their P and
f_loc, and any horizon derived from those values would let participants
finish in different phases and freeze divergent outputs.  The three-valued
filter is likewise essential at those skewed thresholds: if the filter
output were binary, one participant with a too-low fault estimate can be
pushed to a "strong" bit that the king round then contradicts, which an
exhaustive search at P=4, b=1 exposes as an Agreement violation.

The protocol runs 2 + 3R phases, i.e. O(R) rather than the O(b) of an
optimal construction; callers poll ``finished`` and the round-bound
reporting accounts for the measured phase count.  Message senders are
authenticated by the transport (weakly Byzantine senders cannot forge
IDs); payloads are adversary-controlled.
"""

from __future__ import annotations

from .util import ceil_div

BOTTOM = None  # "no value" marker inside a pair

DEFAULT_ROTATIONS = 10


def _as_set(payload) -> frozenset:
    if isinstance(payload, (set, frozenset)):
        return frozenset(payload)
    return frozenset()


def _as_echo(payload) -> dict:
    if isinstance(payload, dict):
        return {k: _as_set(v) for k, v in payload.items()}
    return {}


def _as_tagged(payload) -> tuple:
    """Sanitize a tally-phase payload into (ones, unsure) atom sets."""
    if isinstance(payload, dict):
        return _as_set(payload.get("one")), _as_set(payload.get("unsure"))
    if isinstance(payload, (set, frozenset)):
        return frozenset(payload), frozenset()
    return frozenset(), frozenset()


class InstanceFinished(RuntimeError):
    pass


class PconsInstance:
    """One agent's state for one consensus instance."""

    def __init__(self, input_set, owner: int, tag: str = "S",
                 rotations: int = DEFAULT_ROTATIONS):
        pairs = frozenset(input_set)
        ids = [p[0] for p in pairs]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate pair_id in input set")
        if rotations < 1:
            raise ValueError("rotations must be >= 1")
        self.input = pairs
        self.owner = owner
        self.tag = tag
        self.rotations = rotations
        self.horizon = 2 + 3 * rotations
        self.phases_done = 0
        self.payload = pairs  # broadcast for the phase currently in flight
        self.output = None
        self.finished = False
        self._direct = None
        self._P = None
        self._f_loc = None
        self._certified = None
        self._atoms = None
        self._bits = None
        self._strong = None
        self._unsure = None

    @property
    def current_phase(self) -> int:
        """Phase whose messages are being exchanged right now."""
        return self.phases_done + 1

    def try_output(self):
        return self.output if self.finished else None

    def phase_count(self) -> int:
        if not self.finished:
            raise InstanceFinished("output not set yet")
        return self.horizon

    def _bit_set(self) -> frozenset:
        return frozenset(a for a in self._atoms if self._bits[a])

    def on_phase_end(self, inbox: dict):
        """Consume this phase's messages (sender -> payload) and advance.

        The instance adds its own broadcast to the inbox; callers pass only
        messages from other participants, at most one per sender.
        """
        if self.finished:
            raise InstanceFinished("instance finished")
        q = self.phases_done + 1
        msgs = dict(inbox)
        msgs[self.owner] = self.payload
        if q == 1:
            self._direct = {s: _as_set(p) for s, p in msgs.items()}
            self.payload = dict(self._direct)
        elif q == 2:
            echoes = {s: _as_echo(p) for s, p in msgs.items()}
            self._P = len(self._direct)
            self._f_loc = (self._P - 1) // 3
            threshold = ceil_div(2 * self._P, 3)
            claimed = set()
            for e in echoes.values():
                claimed.update(e.keys())
            certified = sorted(
                j for j in claimed
                if sum(1 for e in echoes.values() if j in e) >= threshold
            )
            self._certified = certified or [self.owner]
            atoms = set()
            for s in self._direct.values():
                atoms.update(s)
            self._atoms = sorted(atoms)
            self._bits = {}
            self._strong = {}
            for a in self._atoms:
                support = sum(1 for s in self._direct.values() if a in s)
                self._bits[a] = 1 if support >= self._f_loc + 1 else 0
                self._strong[a] = True
            self.payload = self._bit_set()
        else:
            sub = (q - 3) % 3
            r = (q - 3) // 3
            tau = self._P - self._f_loc
            if sub == 0:
                # filter: a bit settles to v only on tau same-value votes
                sets = [_as_set(p) for p in msgs.values()]
                total = len(sets)
                ones, unsure = set(), set()
                for a in self._atoms:
                    u1 = sum(1 for s in sets if a in s)
                    if u1 >= tau:
                        ones.add(a)
                    elif total - u1 < tau:
                        unsure.add(a)
                self._unsure = unsure
                self.payload = {"one": frozenset(ones),
                                "unsure": frozenset(unsure)}
            elif sub == 1:
                # tally: adopt the plurality bit, strong on tau support
                tagged = [_as_tagged(p) for p in msgs.values()]
                total = len(tagged)
                for a in self._atoms:
                    d1 = sum(1 for ones, _ in tagged if a in ones)
                    dbot = sum(1 for _, uns in tagged if a in uns)
                    d0 = total - d1 - dbot
                    self._bits[a] = 1 if d1 > d0 else 0
                    self._strong[a] = (d1 if self._bits[a] else d0) >= tau
                self.payload = self._bit_set()
            else:
                king = self._certified[r % len(self._certified)]
                kset = _as_set(msgs.get(king))
                for a in self._atoms:
                    if not self._strong[a]:
                        self._bits[a] = 1 if a in kset else 0
                self.payload = self._bit_set()
            if q == self.horizon:
                self.finished = True
                self.output = self._bit_set()
        self.phases_done = q


def oracle_decide(good_inputs: dict, adversary_choice) -> dict:
    """Referee mode: one common output enforcing the PBC properties.

    ``adversary_choice`` selects which pairs held by some-but-not-all good
    participants appear in the common output; referencing a pair absent
    from every good input is an error.
    """
    if not good_inputs:
        return {}
    sets = [frozenset(s) for s in good_inputs.values()]
    union = frozenset().union(*sets)
    unanimous = sets[0]
    for s in sets[1:]:
        unanimous &= s
    required = frozenset(p for p in unanimous if p[1] is not BOTTOM)
    choice = frozenset(adversary_choice)
    if not choice <= union:
        raise ValueError("adversary_choice references pair absent from all good inputs")
    out = required | (choice & (union - required))
    return {agent: out for agent in good_inputs}


def run_protocol(good_inputs: dict, byz=None, rotations: int = DEFAULT_ROTATIONS,
                 max_phases: int = 512) -> tuple:
    """Synchronous all-to-all driver for the reference protocol (test use).

    ``byz`` maps a Byzantine sender ID to a function
    ``(phase, recipient) -> payload or None`` (None = no message).
    Returns (outputs dict, phase counts dict).
    """
    byz = byz or {}
    inst = {g: PconsInstance(s, owner=g, rotations=rotations)
            for g, s in good_inputs.items()}
    for q in range(1, max_phases + 1):
        if all(i.finished for i in inst.values()):
            break
        broadcasts = {g: i.payload for g, i in inst.items()}
        for g, i in inst.items():
            if i.finished:
                continue
            inbox = {h: p for h, p in broadcasts.items() if h != g}
            for b, fn in byz.items():
                m = fn(q, g)
                if m is not None:
                    inbox[b] = m
            i.on_phase_end(inbox)
    else:
        raise RuntimeError("protocol did not terminate within max_phases")
    outputs = {g: i.output for g, i in inst.items()}
    phases = {g: i.phase_count() for g, i in inst.items()}
    return outputs, phases

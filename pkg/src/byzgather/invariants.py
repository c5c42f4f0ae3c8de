"""Stage-machine invariant checks over a recorded run.

Input is the per-(round, agent) trace rows plus the event stream the
engine emits for good agents.  Every check returns pass/fail with the
round of the first violation, so a doctored trace pinpoints the fault.

Checked properties:

* cycle-alignment: good agents in the first two stages share (length,
  elapsed) whenever they acted on their own state machine that round
  (rows produced by FOLLOW are excluded: a follower's own cycle is
  suspended while it mirrors a group);
* agree-entry-alignment: good agents entering the consensus stage at
  different times have power-of-two related lengths and offset cycle
  starts that coincide;
* collect-coverage: every good agent reaches MakeCandidate with S_p
  containing all good IDs, and g <= |S_p| <= k;
* big-candidate: some round sees at least ceil(7g/18) good agents enter
  AgreeID simultaneously;
* length-bound: every good length stays below 32*(t_rel(a_max)+1);
* common-output: the big candidate's members finish consensus with
  identical S_c and P_c, S_c contains all good IDs, and P_c restricted to
  good IDs is exactly the candidate's good membership;
* group-size: any round where a good agent adopts a gid has at least
  ceil(k/8) good agents adopting that same gid;
* terminal-freeze: after terminating, an agent's recorded state and node
  never change.
"""

from __future__ import annotations

from dataclasses import dataclass

from .agent import (AID, CID, EV_GID, EV_PCONS_DONE, EV_STAGE, MC,
                    STAGE_NAMES)
from .rendezvous import t_rel
from .sim import (ACT_FOLLOW_MOVE_BASE, ACT_FOLLOW_STAY,
                  ACT_FOLLOW_TERMINATE, ACT_TERMINATE)
from .util import ceil_div

R_ROUND, R_ID, R_NODE, R_STAGE, R_LENGTH, R_ELAPSED = 0, 1, 2, 3, 4, 5
R_COUNT, R_READY, R_ENDMC, R_GID, R_ACTION = 6, 7, 8, 9, 10
R_SP, R_PP, R_PC, R_D = 11, 12, 13, 14


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    first_violation_round: int = -1


@dataclass
class InvariantReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _is_follow(action: int) -> bool:
    return action in (ACT_FOLLOW_STAY, ACT_FOLLOW_TERMINATE) \
        or action >= ACT_FOLLOW_MOVE_BASE


def _mask_ids(mask: int, universe) -> frozenset:
    return frozenset(universe[j] for j in range(len(universe)) if (mask >> j) & 1)


def evaluate(rows, events, meta) -> InvariantReport:
    """Run every invariant check.

    ``meta`` needs: good_ids, byz_ids, universe, t_ex, rel_scale.
    """
    good = frozenset(meta["good_ids"])
    universe = tuple(meta["universe"])
    k = len(good) + len(frozenset(meta["byz_ids"]))
    g = len(good)
    t_ex = meta["t_ex"]
    rel_scale = meta["rel_scale"]
    checks = [
        _check_cycle_alignment(rows, good),
        _check_agree_entry(events, good),
        _check_collect_coverage(events, good, universe, k),
        _check_big_candidate(events, good, g),
        _check_length_bound(rows, good, t_ex, rel_scale),
        _check_common_output(events, good, universe, g),
        _check_group_size(events, good, k),
        _check_terminal_freeze(rows, good),
    ]
    return InvariantReport(checks)


def _check_cycle_alignment(rows, good) -> CheckResult:
    name = "cycle-alignment"
    current = {}
    current_round = None
    for row in rows:
        rnd = row[R_ROUND]
        if rnd != current_round:
            current_round = rnd
            current = {}
        if row[R_ID] not in good:
            continue
        if row[R_STAGE] not in (CID, MC) or _is_follow(row[R_ACTION]):
            continue
        key = (row[R_LENGTH], row[R_ELAPSED])
        if current and key not in current:
            other = next(iter(current))
            return CheckResult(
                name, False,
                f"agent {row[R_ID]} at (length,elapsed)={key} vs {other}",
                rnd)
        current[key] = row[R_ID]
    return CheckResult(name, True)


def _check_agree_entry(events, good) -> CheckResult:
    name = "agree-entry-alignment"
    entries = []
    for e in events:
        if e[0] == EV_STAGE and e[3] == AID and e[2] in good:
            entries.append((e[1], e[2], e[4]))
    entries.sort()
    for i, (r1, a1, l1) in enumerate(entries):
        for (r2, a2, l2) in entries[i + 1:]:
            if r1 == r2:
                if l1 != l2:
                    return CheckResult(
                        name, False,
                        f"agents {a1},{a2} entered together with lengths {l1},{l2}",
                        r2)
            else:
                if l2 % l1 != 0 or (r2 - r1) % l1 != 0:
                    return CheckResult(
                        name, False,
                        f"agent {a2} (round {r2}, length {l2}) misaligned with "
                        f"agent {a1} (round {r1}, length {l1})",
                        r2)
    return CheckResult(name, True)


def _check_collect_coverage(events, good, universe, k) -> CheckResult:
    name = "collect-coverage"
    for e in events:
        if e[0] == EV_STAGE and e[3] == MC and e[2] in good:
            sp = _mask_ids(e[5], universe)
            if not good <= sp:
                return CheckResult(
                    name, False,
                    f"agent {e[2]} entered {STAGE_NAMES[MC]} missing good ids "
                    f"{sorted(good - sp)}", e[1])
            if not (len(good) <= len(sp) <= k):
                return CheckResult(
                    name, False,
                    f"agent {e[2]} has |S_p|={len(sp)} outside [{len(good)},{k}]",
                    e[1])
    return CheckResult(name, True)


def _big_candidate(events, good, g):
    """(round, member ids) of the largest simultaneous AgreeID entry."""
    per_round = {}
    for e in events:
        if e[0] == EV_STAGE and e[3] == AID and e[2] in good:
            per_round.setdefault(e[1], set()).add(e[2])
    if not per_round:
        return None, frozenset()
    rnd = max(per_round, key=lambda r: (len(per_round[r]), -r))
    return rnd, frozenset(per_round[rnd])


def _check_big_candidate(events, good, g) -> CheckResult:
    name = "big-candidate"
    need = ceil_div(7 * g, 18)
    rnd, members = _big_candidate(events, good, g)
    if len(members) >= need:
        return CheckResult(name, True, f"{len(members)} agents at round {rnd}")
    return CheckResult(
        name, False,
        f"largest simultaneous AgreeID entry has {len(members)} < {need} agents",
        rnd if rnd is not None else -1)


def _check_length_bound(rows, good, t_ex, rel_scale) -> CheckResult:
    name = "length-bound"
    a_max = max(good)
    bound = 32 * (t_rel(a_max, t_ex, rel_scale) + 1)
    for row in rows:
        if row[R_ID] in good and row[R_LENGTH] >= bound:
            return CheckResult(
                name, False,
                f"agent {row[R_ID]} length {row[R_LENGTH]} >= {bound}",
                row[R_ROUND])
    return CheckResult(name, True, f"bound {bound}")


def _check_common_output(events, good, universe, g) -> CheckResult:
    name = "common-output"
    rnd, members = _big_candidate(events, good, g)
    if not members:
        return CheckResult(name, False, "no AgreeID entry observed", -1)
    outs = {}
    for e in events:
        if e[0] == EV_PCONS_DONE and e[2] in members:
            outs[e[2]] = (e[3], e[4])
    if set(outs) != members:
        missing = sorted(members - set(outs))
        return CheckResult(
            name, False, f"candidate members {missing} never finished consensus",
            -1)
    values = set(outs.values())
    if len(values) != 1:
        return CheckResult(
            name, False, f"candidate outputs diverge across {len(values)} values",
            -1)
    sc_mask, pc_mask = values.pop()
    sc = _mask_ids(sc_mask, universe)
    pc = _mask_ids(pc_mask, universe)
    if not good <= sc:
        return CheckResult(
            name, False, f"S_c missing good ids {sorted(good - sc)}", -1)
    if pc & good != members:
        return CheckResult(
            name, False,
            f"P_c good part {sorted(pc & good)} != candidate {sorted(members)}",
            -1)
    return CheckResult(name, True, f"candidate size {len(members)}")


def _check_group_size(events, good, k) -> CheckResult:
    name = "group-size"
    need = ceil_div(k, 8)
    per_round = {}
    for e in events:
        if e[0] == EV_GID and e[2] in good:
            per_round.setdefault(e[1], []).append((e[2], e[3]))
    for rnd in sorted(per_round):
        gids = {}
        for agent, gid in per_round[rnd]:
            gids.setdefault(gid, set()).add(agent)
        for gid, agents in gids.items():
            if len(agents) < need:
                return CheckResult(
                    name, False,
                    f"round {rnd}: gid {gid} adopted by only {len(agents)} "
                    f"good agents (< {need})", rnd)
    if not per_round:
        return CheckResult(name, False, "no good agent ever adopted a gid", -1)
    return CheckResult(name, True)


def _check_terminal_freeze(rows, good) -> CheckResult:
    name = "terminal-freeze"
    frozen = {}
    for row in rows:
        i = row[R_ID]
        if i not in good:
            continue
        if i in frozen:
            want = frozen[i]
            got = (row[R_NODE],) + tuple(row[R_STAGE:R_ACTION]) + (0,) \
                + tuple(row[R_ACTION + 1:])
            have = (row[R_NODE],) + tuple(row[R_STAGE:R_ACTION]) \
                + (row[R_ACTION],) + tuple(row[R_ACTION + 1:])
            if want != have:
                return CheckResult(
                    name, False, f"agent {i} state changed after terminating",
                    row[R_ROUND])
        elif row[R_ACTION] in (ACT_TERMINATE, ACT_FOLLOW_TERMINATE):
            frozen[i] = (row[R_NODE],) + tuple(row[R_STAGE:R_ACTION]) + (0,) \
                + tuple(row[R_ACTION + 1:])
    return CheckResult(name, True)

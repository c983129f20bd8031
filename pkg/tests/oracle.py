"""Independent brute-force oracle for the billing and allocation math.

Deliberately dumb: plain Python loops over per-interval (consumption,
generation) profiles, no imports from the package under test.  Coalition
costs sum pooled profiles directly, the Shapley value averages marginal
contributions over every player permutation, and the subadditivity / core
checks enumerate coalitions with itertools.  Used to recompute every pinned
expected value before the engine is held to it.

Profiles are dicts: household id -> (consumption list, generation list).
Prices are cents/kWh; all money is cents.
"""

from itertools import chain, combinations, permutations


def positive(v):
    return v if v > 0 else 0.0


def pool(profiles, members):
    members = list(members)
    t = len(profiles[members[0]][0])
    q = [sum(profiles[h][0][k] for h in members) for k in range(t)]
    g = [sum(profiles[h][1][k] for h in members) for k in range(t)]
    return q, g


def fit_cost(q, g, lam, mu):
    return lam * sum(q) - mu * sum(g)


def nm_cost(q, g, lam, mu):
    net = sum(q) - sum(g)
    return lam * positive(net) - mu * positive(-net)


def nps_cost(q, g, lam, mu):
    return sum(
        lam * positive(qt - gt) - mu * positive(gt - qt) for qt, gt in zip(q, g)
    )


MECHANISM_COST = {"fit": fit_cost, "nm": nm_cost, "nps": nps_cost}


def coalition_cost(profiles, members, mechanism, lam, mu):
    q, g = pool(profiles, members)
    return MECHANISM_COST[mechanism](q, g, lam, mu)


def nm_allocation(profiles, lam, mu):
    nets = {h: sum(q) - sum(g) for h, (q, g) in profiles.items()}
    price = lam if sum(nets.values()) >= 0 else mu
    return {h: price * d for h, d in nets.items()}


def nps_allocation(profiles, lam, mu):
    ids = list(profiles)
    t = len(profiles[ids[0]][0])
    x = {h: 0.0 for h in ids}
    for k in range(t):
        d = {h: profiles[h][0][k] - profiles[h][1][k] for h in ids}
        price = lam if sum(d.values()) >= 0 else mu
        for h in ids:
            x[h] += price * d[h]
    return x


def shapley_by_permutations(players, cost):
    """cost takes a frozenset of players; empty set must cost 0."""
    players = list(players)
    acc = {p: 0.0 for p in players}
    count = 0
    for order in permutations(players):
        chosen = []
        prev = 0.0
        for p in order:
            chosen.append(p)
            current = cost(frozenset(chosen))
            acc[p] += current - prev
            prev = current
        count += 1
    return {p: total / count for p, total in acc.items()}


def powerset(items):
    s = list(items)
    return chain.from_iterable(combinations(s, r) for r in range(len(s) + 1))


def subadditivity_violations(players, cost, tol=1e-6):
    out = []
    for left in powerset(players):
        if not left:
            continue
        rest = [p for p in players if p not in left]
        for right in powerset(rest):
            if not right:
                continue
            c_left = cost(frozenset(left))
            c_right = cost(frozenset(right))
            c_union = cost(frozenset(left) | frozenset(right))
            if c_union > c_left + c_right + tol:
                out.append((tuple(left), tuple(right), c_left, c_right, c_union))
    return out


def core_violations(players, cost, x, tol=1e-6):
    out = []
    grand = cost(frozenset(players))
    if abs(sum(x.values()) - grand) > tol:
        out.append(("budget", sum(x.values()), grand))
    for members in powerset(players):
        if not members:
            continue
        allocated = sum(x[p] for p in members)
        if allocated > cost(frozenset(members)) + tol:
            out.append((tuple(members), allocated, cost(frozenset(members))))
    return out


def parse_fix_a_by_hand(text):
    """Minimal independent CSV reader for the two-household fixture."""
    lines = [line for line in text.replace("\r\n", "\n").split("\n") if line]
    header = lines[0].split(",")
    assert header == ["localminute", "dataid", "use", "gen"]
    rows = {}
    for line in lines[1:]:
        stamp, hid, use, gen = line.split(",")
        rows.setdefault(hid, []).append((stamp, float(use), float(gen)))
    for recs in rows.values():
        recs.sort()
    return {
        h: ([q for _, q, _ in recs], [g for _, _, g in recs])
        for h, recs in rows.items()
    }

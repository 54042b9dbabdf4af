"""Slow reference implementations used as test oracles."""
import functools
import itertools
import math


def naive_edit_distance(a, b):
    """Plain recursive Levenshtein distance (exponential; keep inputs short)."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(naive_edit_distance(a[1:], b) + 1,
               naive_edit_distance(a, b[1:]) + 1,
               naive_edit_distance(a[1:], b[1:]) + (a[0] != b[0]))


def all_alignment_counts(ref, hyp):
    """Set of (S, I, D) over every monotone alignment of ``ref`` to ``hyp``."""
    @functools.lru_cache(maxsize=None)
    def go(i, j):
        if i == len(ref) and j == len(hyp):
            return frozenset({(0, 0, 0)})
        out = set()
        if i < len(ref) and j < len(hyp):
            sub = int(ref[i] != hyp[j])
            out |= {(s + sub, n, d) for s, n, d in go(i + 1, j + 1)}
        if i < len(ref):
            out |= {(s, n, d + 1) for s, n, d in go(i + 1, j)}
        if j < len(hyp):
            out |= {(s, n + 1, d) for s, n, d in go(i, j + 1)}
        return frozenset(out)
    return go(0, 0)


def best_alignment(ref, hyp):
    """Minimum total errors, then minimum substitutions."""
    return min(all_alignment_counts(tuple(ref), tuple(hyp)), key=lambda c: (sum(c), c[0]))


def tc_edit_distance(ref, hyp, ref_times, hyp_times, collar):
    """Time-constrained Levenshtein by memoized recursion."""
    @functools.lru_cache(maxsize=None)
    def go(i, j):
        if i == len(ref):
            return len(hyp) - j
        if j == len(hyp):
            return len(ref) - i
        best = min(go(i + 1, j), go(i, j + 1)) + 1
        rs, re = ref_times[i]
        hs, he = hyp_times[j]
        if rs - collar <= he and hs <= re + collar:
            best = min(best, go(i + 1, j + 1) + (ref[i] != hyp[j]))
        return best
    return go(0, 0)


def brute_force_cp_errors(ref_streams, hyp_streams, distance=None):
    """Minimum total errors over every injective speaker assignment."""
    distance = distance or (lambda r, h: naive_or_dp(r, h))
    refs, hyps = list(ref_streams.values()), list(hyp_streams.values())
    size = max(len(refs), len(hyps))
    refs += [None] * (size - len(refs))
    hyps += [None] * (size - len(hyps))
    best = math.inf
    for perm in itertools.permutations(range(size)):
        total = 0
        for i, j in enumerate(perm):
            r, h = refs[i], hyps[j]
            if r is None and h is None:
                continue
            if r is None:
                total += len(h)
            elif h is None:
                total += len(r)
            else:
                total += distance(r, h)
        best = min(best, total)
    return 0 if size == 0 else best


def naive_or_dp(a, b):
    # Plain (untimed) Levenshtein with a textbook table, independent of the library.
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]

import itertools
import math

import numpy as np
import pytest

from xbarbnn import cascade as cas
from xbarbnn.crossbar import ReferenceSet, sa_read


def _readouts(refs, seg1, seg2, d1, d2):
    return [sa_read(d1, refs.for_segment(seg1)), sa_read(d2, refs.for_segment(seg2))]


def _decide(kind, nu, x, count, d1, d2):
    seg = nu // 2
    refs = ReferenceSet(seg, x, count)
    pol = cas.CascadePolicy(kind, refs)
    return cas.cascade(pol, _readouts(refs, seg, seg, d1, d2), [seg, seg])


def _golden(d1, d2, nu):
    return 1 if 2 * (d1 + d2) > nu else 0


def raw_pair_loss(nu, kind, x=0, count=1):
    """Oracle: every (A, B) pair walked as integers with numpy, segment
    counts taken bit by bit, the policy spelled out in place."""
    seg = nu // 2
    vals = np.arange(1 << nu, dtype=np.uint32)
    xnor = ~(vals[:, None] ^ vals[None, :]) & ((1 << nu) - 1)
    pop = np.array([bin(v).count("1") for v in range(1 << seg)], dtype=np.int32)
    d1 = pop[xnor & ((1 << seg) - 1)]
    d2 = pop[xnor >> seg]
    golden = 2 * (d1 + d2) > nu
    main = seg // 2
    if kind == "AND":
        out = (d1 > main) & (d2 > main)
    elif kind == "OR":
        out = (d1 > main) | (d2 > main)
    elif kind == "F1":
        L = np.array([main + j * x for j in range(-(count // 2), count // 2 + 1)])
        t1 = (d1[..., None] > L).sum(axis=-1)
        t2 = (d2[..., None] > L).sum(axis=-1)
        lo = lambda t: np.where(t >= 1, L[np.clip(t - 1, 0, count - 1)], 0)
        out = (t1 >= 1) & (t2 >= 1) & (2 * (lo(t1) + lo(t2)) >= nu)
    else:
        raise ValueError(kind)
    fp = int((out & ~golden).sum())
    fn = int((~out & golden).sum())
    return fp, fn


class TestPolicyValidation:
    def test_kinds(self):
        with pytest.raises(ValueError):
            cas.CascadePolicy("XOR", ReferenceSet(8))

    def test_f1_f2_need_auxiliaries(self):
        for kind in ("F1", "F2"):
            with pytest.raises(ValueError):
                cas.CascadePolicy(kind, ReferenceSet(8, 0, 1))
            cas.CascadePolicy(kind, ReferenceSet(8, 1, 3))  # fine


class TestCascadeRules:
    def test_and_both_above(self):
        assert _decide("AND", 8, 0, 1, 3, 3) == 1
        assert _decide("AND", 8, 0, 1, 3, 2) == 0

    def test_or_any_above(self):
        assert _decide("OR", 8, 0, 1, 3, 0) == 1
        assert _decide("OR", 8, 0, 1, 2, 2) == 0

    def test_f1_false_negative_cell(self):
        # counts (3, 6) on 8+8: readouts land between low ref and main /
        # between main and high ref; no lower-bound pair certifies a
        # majority, yet the true sum 9 > 8
        assert _golden(3, 6, 16) == 1
        assert _decide("F1", 16, 2, 3, 3, 6) == 0

    def test_f2_rescues_that_cell_by_midpoints(self):
        assert _decide("F2", 16, 2, 3, 3, 6) == 1

    def test_f1_fires_on_certified_pairs(self):
        # above high ref on one side and above low ref on the other
        assert _decide("F1", 16, 2, 3, 7, 3) == 1
        # both strictly above their mains
        assert _decide("F1", 16, 2, 3, 5, 5) == 1

    def test_errors(self):
        refs = ReferenceSet(8, 1, 3)
        pol = cas.CascadePolicy("F1", refs)
        with pytest.raises(ValueError):
            cas.cascade(pol, [], [])
        with pytest.raises(ValueError):
            cas.cascade(pol, _readouts(refs, 8, 8, 1, 1), [8])

    def test_three_segment_fold_stays_sound_and_complete(self):
        # left-to-right bound accumulation over three segments
        seg, nu = 8, 24
        refs = ReferenceSet(seg, 2, 3)
        f1 = cas.CascadePolicy("F1", refs)
        f2 = cas.CascadePolicy("F2", refs)
        for d in itertools.product(range(seg + 1), repeat=3):
            r = [sa_read(v, refs) for v in d]
            golden = 1 if 2 * sum(d) > nu else 0
            v1 = cas.cascade(f1, r, [seg] * 3)
            v2 = cas.cascade(f2, r, [seg] * 3)
            assert not (v1 == 1 and golden == 0)  # F1 sound
            assert not (v2 == 0 and golden == 1)  # F2 complete
            assert v2 >= v1


class TestEventPredicates:
    """The mismatch sets must equal the published loss-event regions for the
    two cascading functions, under the strict comparator (a count equal to a
    reference falls below it)."""

    @pytest.mark.parametrize("nu", [8, 16, 24, 32])
    def test_f1_f2_mismatch_sets_match_transcribed_events(self, nu):
        seg = nu // 2
        main = seg // 2
        for x in range(1, main):
            if main + x >= seg:
                continue
            r0 = r3 = main - x
            r1 = r4 = main
            r2 = r5 = main + x
            for d1, d2 in itertools.product(range(seg + 1), repeat=2):
                g = _golden(d1, d2, nu)
                s2 = 2 * (d1 + d2)
                v1 = _decide("F1", nu, x, 3, d1, d2)
                f1_events = (
                    (d2 > r5 and d1 <= r0 and s2 > nu)
                    or (d2 <= r3 and d1 > r2 and s2 > nu)
                    or (r4 < d2 <= r5 and r0 < d1 <= r1 and s2 > nu)
                    or (r3 < d2 <= r4 and r1 < d1 <= r2 and s2 > nu)
                )
                assert (v1 != g) == f1_events, (nu, x, d1, d2)
                v2 = _decide("F2", nu, x, 3, d1, d2)
                f2_events = (
                    (d2 > r5 and s2 <= nu)
                    or (d1 > r2 and s2 <= nu)
                    or (r3 < d2 <= r4 and r1 < d1 <= r2 and s2 <= nu)
                    or (r4 < d2 <= r5 and r0 < d1 <= r1 and s2 <= nu)
                )
                assert (v2 != g) == f2_events, (nu, x, d1, d2)

    def test_f1_never_false_positive_f2_never_false_negative(self):
        for nu in (8, 12, 16):
            seg = nu // 2
            for count in (3, 5):
                span = count // 2
                for x in range(1, (seg // 2) // span + 1):
                    if seg // 2 + span * x >= seg:
                        continue
                    for d1, d2 in itertools.product(range(seg + 1), repeat=2):
                        g = _golden(d1, d2, nu)
                        v1 = _decide("F1", nu, x, count, d1, d2)
                        v2 = _decide("F2", nu, x, count, d1, d2)
                        assert not (v1 == 1 and g == 0)
                        assert not (v2 == 0 and g == 1)
                        assert v2 >= v1


class TestRegionPredicates:
    def test_examples(self):
        assert cas.region_predicate_and(1, 4, 8) is True
        assert cas.region_predicate_and(3, 3, 8) is False
        assert cas.region_predicate_or(3, 1, 8) is True
        assert cas.region_predicate_or(2, 2, 8) is False

    @pytest.mark.parametrize("nu", [8, 10, 12, 16, 20])
    def test_and_or_mismatches_exactly_fill_their_regions(self, nu):
        seg = nu // 2
        for d1, d2 in itertools.product(range(seg + 1), repeat=2):
            g = _golden(d1, d2, nu)
            a = _decide("AND", nu, 0, 1, d1, d2)
            o = _decide("OR", nu, 0, 1, d1, d2)
            assert (a != g) == cas.region_predicate_and(d1, d2, nu)
            assert (o != g) == cas.region_predicate_or(d1, d2, nu)

    def test_region_count_equals_census_mismatches(self):
        nu, seg = 12, 6
        pol = cas.CascadePolicy("AND", ReferenceSet(seg))
        report = cas.enumerate_loss(nu, seg, pol)
        weighted = sum(
            cas.pair_count(seg, d1) * cas.pair_count(seg, d2)
            for d1 in range(seg + 1)
            for d2 in range(seg + 1)
            if cas.region_predicate_and(d1, d2, nu)
        )
        assert weighted == report.mismatches


class TestPairCount:
    def test_closed_form_identity(self):
        # C(h,m) * 2^m * 2^(h-m) collapses to C(h,m) * 2^h
        for h in (2, 4, 6, 10):
            for m in range(h + 1):
                literal = math.comb(h, m) * 2**m * 2 ** (h - m)
                assert cas.pair_count(h, m) == literal

    def test_counts_cover_all_pairs(self):
        h = 6
        assert sum(cas.pair_count(h, m) for m in range(h + 1)) == (1 << h) ** 2

    def test_count_matches_direct_enumeration(self):
        h = 4
        for m in range(h + 1):
            direct = sum(
                bin(~(a ^ b) & ((1 << h) - 1)).count("1") == m
                for a in range(1 << h)
                for b in range(1 << h)
            )
            assert cas.pair_count(h, m) == direct


class TestEnumerateLoss:
    @pytest.mark.parametrize("kind", ["AND", "OR"])
    def test_census_equals_raw_bruteforce_nu8(self, kind):
        pol = cas.CascadePolicy(kind, ReferenceSet(4))
        report = cas.enumerate_loss(8, 4, pol)
        fp, fn = raw_pair_loss(8, kind)
        total = (1 << 8) ** 2
        assert (report.false_positives, report.false_negatives) == (fp * total // total, fn)
        assert report.total_pairs == total
        assert report.mismatches == fp + fn

    def test_f1_census_equals_raw_bruteforce(self):
        pol = cas.CascadePolicy("F1", ReferenceSet(4, 1, 3))
        report = cas.enumerate_loss(8, 4, pol)
        fp, fn = raw_pair_loss(8, "F1", x=1, count=3)
        assert (report.false_positives, report.false_negatives) == (fp, fn)

    def test_by_region_sums_to_mismatches(self):
        pol = cas.CascadePolicy("OR", ReferenceSet(5))
        report = cas.enumerate_loss(10, 5, pol)
        assert report.false_positives + report.false_negatives == report.mismatches
        assert 0.0 <= report.loss_fraction <= 1.0

    @pytest.mark.parametrize("kind", ["AND", "OR"])
    def test_loss_stable_over_vector_size(self, kind):
        losses = []
        for nu in (8, 16):
            pol = cas.CascadePolicy(kind, ReferenceSet(nu // 2))
            losses.append(cas.enumerate_loss(nu, nu // 2, pol).loss_fraction)
        assert abs(losses[0] - losses[1]) < 0.05

    def test_rejects_uneven_split(self):
        pol = cas.CascadePolicy("AND", ReferenceSet(4))
        with pytest.raises(ValueError):
            cas.enumerate_loss(9, 4, pol)
        with pytest.raises(ValueError):
            cas.enumerate_loss(8, 3, pol)


class TestDistSpec:
    def test_rejects_bad_sigma(self):
        for bad in (0.0, -1.0, float("nan"), float("inf")):
            with pytest.raises(ValueError):
                cas.DistSpec(bad)

    def test_truncation_keeps_support(self):
        rng = np.random.default_rng(0)
        p = cas.DistSpec(0.8).sample_p(rng, 20_000)
        assert p.min() >= 0.0 and p.max() <= 1.0


class TestMonteCarlo:
    def _policy(self, kind="F2", x=8, count=3, seg=64):
        return cas.CascadePolicy(kind, ReferenceSet(seg, x, count))

    def test_deterministic_given_seed(self):
        pol = self._policy()
        a = cas.monte_carlo_loss(pol, 128, 64, cas.DistSpec(), 20_000, seed=7)
        b = cas.monte_carlo_loss(pol, 128, 64, cas.DistSpec(), 20_000, seed=7)
        assert a == b
        c = cas.monte_carlo_loss(pol, 128, 64, cas.DistSpec(), 20_000, seed=8)
        assert c != a

    def test_wilson_interval_brackets_estimate(self):
        pol = self._policy()
        r = cas.monte_carlo_loss(pol, 128, 64, cas.DistSpec(), 20_000, seed=3)
        assert 0.0 <= r.ci_low <= r.loss_fraction <= r.ci_high <= 1.0
        assert r.mismatches == r.false_positives + r.false_negatives

    def test_rejects_empty_sample(self):
        with pytest.raises(ValueError):
            cas.monte_carlo_loss(self._policy(), 128, 64, cas.DistSpec(), 0, seed=1)

    def test_f2_never_misses_true_ones(self):
        r = cas.monte_carlo_loss(self._policy("F2"), 128, 64, cas.DistSpec(), 50_000, seed=5)
        assert r.false_negatives == 0

    def test_f2_at_most_f1_loss(self):
        for x in (2, 8, 20):
            f1 = cas.monte_carlo_loss(self._policy("F1", x), 128, 64, cas.DistSpec(), 50_000, seed=11)
            f2 = cas.monte_carlo_loss(self._policy("F2", x), 128, 64, cas.DistSpec(), 50_000, seed=11)
            assert f2.loss_fraction <= f1.loss_fraction


class TestSweep:
    def test_row_per_admissible_distance(self):
        pol = cas.CascadePolicy("F2", ReferenceSet(64, 1, 3))
        grid = [1, 4, 16, 31, 32, 400]  # 32 pushes main+x to the edge; 400 is absurd
        rows, rejected = cas.sweep_reference_distance(pol, 128, 64, grid, cas.DistSpec(), 2_000, seed=2)
        assert len(rows) + len(rejected) == len(grid)
        assert [x for x, _ in rejected] == [32, 400]
        assert all("references outside" in why for _, why in rejected)

    def test_deterministic_csv(self):
        pol = cas.CascadePolicy("F1", ReferenceSet(64, 1, 3))
        out = []
        for _ in range(2):
            rows, _ = cas.sweep_reference_distance(pol, 128, 64, [2, 8], cas.DistSpec(), 5_000, seed=4)
            out.append(cas.sweep_rows_to_csv(rows, ["seed=4"]))
        assert out[0] == out[1]
        header, cols = out[0].splitlines()[0], out[0].splitlines()[1]
        assert header == "# seed=4"
        assert cols == ",".join(cas.SWEEP_CSV_COLUMNS)

    def test_rejection_keeps_other_rows_stable(self):
        # dropping a rejected x must not change the remaining rows' draws
        pol = cas.CascadePolicy("F2", ReferenceSet(64, 1, 3))
        rows_a, _ = cas.sweep_reference_distance(pol, 128, 64, [2, 400, 8], cas.DistSpec(), 2_000, seed=6)
        rows_b, _ = cas.sweep_reference_distance(pol, 128, 64, [2, 999, 8], cas.DistSpec(), 2_000, seed=6)
        assert [r.result for r in rows_a] == [r.result for r in rows_b]

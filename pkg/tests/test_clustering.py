"""AP grouping: k-means, exemplar message passing, association, merging."""

import io

import numpy as np
import pytest

from lwcf.antenna import AntennaParams, link_rss, peak_frequency
from lwcf.clustering import (
    Clustering,
    affinity_propagation,
    associate_ues,
    hierarchical_clustering,
    hierarchical_merge,
    kmeans_clusters,
    kmeans_clustering,
    merge_void_clusters,
    per_ap_spectral_efficiency,
    rss_matrix,
    write_clustering_csv,
)
from lwcf.mimo import build_channel, freespace_amplitude, precode, sinr
from lwcf.scenario import (
    Scenario,
    ScenarioConfig,
    generate_scenario,
    link_distance,
)

PARAMS = AntennaParams(1.0, 0.15, 130.0, 100e9)
BAND_UPPER = 200e9


def make_scenario(num_aps=8, num_ues=4, seed=0):
    return generate_scenario(ScenarioConfig(
        area_side=200.0, num_aps=num_aps, num_ues=num_ues,
        elev_diff_range=(5.0, 10.0), total_power=2.0, total_bandwidth=10e9,
        noise_psd=10 ** (-19.8), seed=seed))


def manual_scenario(ap_xy, ue_xy, elev=5.0, angle=0.9):
    """Fully hand-specified drop: identical aperture angles on every link so
    received strength ordering follows distance alone."""
    ap = np.array(ap_xy, float)
    ue = np.array(ue_xy, float)
    m, k = len(ap), len(ue)
    dist = np.array([[link_distance(ap[j], ue[i], elev) for j in range(m)]
                     for i in range(k)])
    return Scenario(
        ap_positions=ap,
        ue_positions=ue,
        elev_diff=np.full((k, m), elev),
        angles=np.full((k, m), angle),
        distances=dist,
        tx_psd=np.full(k, 2e-10),
        noise_psd=10 ** (-19.8),
    )


def assert_partition(clusters, num_aps):
    seen = sorted(a for c in clusters for a in c)
    assert seen == list(range(num_aps))


# ---------------------------------------------------------------------------
# k-means over AP positions
# ---------------------------------------------------------------------------

def test_kmeans_separates_rectangle_ends():
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 50.0], [1.0, 50.0]])
    clusters = kmeans_clusters(pos, 2, np.random.default_rng(0))
    assert sorted(map(sorted, clusters)) == [[0, 1], [2, 3]]


def test_kmeans_degenerate_counts():
    pos = np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]])
    assert kmeans_clusters(pos, 1, np.random.default_rng(0)) == [(0, 1, 2)]
    singles = kmeans_clusters(pos, 3, np.random.default_rng(0))
    assert sorted(map(sorted, singles)) == [[0], [1], [2]]


def test_kmeans_partitions_random_layouts():
    rng = np.random.default_rng(1)
    for _ in range(10):
        m = int(rng.integers(4, 12))
        pos = rng.uniform(0, 200, (m, 2))
        k = int(rng.integers(2, min(m, 5)))
        clusters = kmeans_clusters(pos, k, rng)
        assert_partition(clusters, m)
        assert 1 <= len(clusters) <= k


def test_kmeans_survives_identical_positions():
    pos = np.zeros((5, 2))
    clusters = kmeans_clusters(pos, 2, np.random.default_rng(2))
    assert_partition(clusters, 5)


# ---------------------------------------------------------------------------
# exemplar-based grouping
# ---------------------------------------------------------------------------

def test_affinity_finds_two_far_groups():
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 10, (4, 2))
    b = rng.uniform(0, 10, (4, 2)) + 1000.0
    clusters, converged = affinity_propagation(np.vstack([a, b]))
    assert converged
    assert sorted(map(sorted, clusters)) == [[0, 1, 2, 3], [4, 5, 6, 7]]


def test_affinity_identical_points_single_cluster():
    clusters, converged = affinity_propagation(np.zeros((5, 2)))
    assert converged
    assert clusters == [(0, 1, 2, 3, 4)]


def test_affinity_single_point():
    clusters, converged = affinity_propagation(np.array([[3.0, 4.0]]))
    assert clusters == [(0,)] and converged


def test_affinity_group_count_scales_with_separation():
    # well separated blobs (spacing >= 10x the spread) come out as one
    # cluster each, whatever the seed
    rng = np.random.default_rng(4)
    for _ in range(5):
        spread = float(rng.uniform(1.0, 5.0))
        offsets = np.array([[0.0, 0.0], [60.0 * spread, 0.0],
                            [0.0, 60.0 * spread]])
        pts = np.vstack([rng.uniform(0, spread, (3, 2)) + off
                         for off in offsets])
        clusters, _ = affinity_propagation(pts)
        assert_partition(clusters, 9)
        assert len(clusters) == 3
        groups = sorted(tuple(sorted(c)) for c in clusters)
        assert groups == [(0, 1, 2), (3, 4, 5), (6, 7, 8)]


# ---------------------------------------------------------------------------
# association
# ---------------------------------------------------------------------------

def test_rss_matrix_matches_linkwise():
    sc = make_scenario(seed=5)
    rss = rss_matrix(sc, PARAMS, BAND_UPPER)
    assert rss.shape == (4, 8)
    for k in range(4):
        for m in range(8):
            theta = sc.angles[k, m]
            f_eval = min(max(peak_frequency(PARAMS.cutoff_frequency, theta),
                             PARAMS.cutoff_frequency * (1 + 1e-9)), BAND_UPPER)
            h2 = freespace_amplitude(f_eval, sc.distances[k, m]) ** 2
            want = link_rss(sc.tx_psd[k], PARAMS, theta, h2, BAND_UPPER)
            assert rss[k, m] == pytest.approx(want, rel=1e-12)


def test_associate_picks_strongest_ap():
    sc = manual_scenario([[0, 0], [500, 0], [1000, 0]],
                         [[990, 0], [10, 0]])
    clusters = [(0, 1), (2,)]
    ue_to_ap, ue_to_cluster = associate_ues(sc, PARAMS, clusters, BAND_UPPER)
    assert ue_to_ap.tolist() == [2, 0]
    assert ue_to_cluster.tolist() == [1, 0]


def test_associate_matches_argmax_and_relabels():
    sc = make_scenario(seed=6)
    clusters = [(0, 1, 2, 3), (4, 5), (6, 7)]
    ue_to_ap, ue_to_cluster = associate_ues(sc, PARAMS, clusters, BAND_UPPER)
    rss = rss_matrix(sc, PARAMS, BAND_UPPER)
    assert ue_to_ap.tolist() == np.argmax(rss, axis=1).tolist()
    for k in range(sc.num_ues):
        assert ue_to_ap[k] in clusters[ue_to_cluster[k]]
    # permuting the cluster list permutes labels, not the serving APs
    perm = [clusters[2], clusters[0], clusters[1]]
    ue_to_ap2, ue_to_cluster2 = associate_ues(sc, PARAMS, perm, BAND_UPPER)
    assert np.array_equal(ue_to_ap, ue_to_ap2)
    remap = {0: 1, 1: 2, 2: 0}
    assert [remap[int(z)] for z in ue_to_cluster] == ue_to_cluster2.tolist()


def test_clustering_dataclass_validation():
    with pytest.raises(ValueError):
        Clustering(((0, 1), (1, 2)), np.array([0]), np.array([0]))
    with pytest.raises(ValueError):
        Clustering(((0, 1), ()), np.array([0]), np.array([0]))
    with pytest.raises(ValueError):
        # serving AP 2 is not in cluster 0
        Clustering(((0, 1), (2,)), np.array([2]), np.array([0]))
    good = Clustering(((0, 1), (2,)), np.array([2]), np.array([1]))
    assert good.num_clusters == 2


# ---------------------------------------------------------------------------
# per-AP spectral efficiency
# ---------------------------------------------------------------------------

def test_per_ap_se_void_cluster_scores_zero():
    sc = manual_scenario([[0, 0], [1000, 0]], [[1, 0]])
    # the single UE is served by AP 0, so cluster (1,) is void
    assert per_ap_spectral_efficiency((1,), sc, PARAMS, "zf", BAND_UPPER) == 0.0
    with pytest.raises(ValueError):
        per_ap_spectral_efficiency((), sc, PARAMS, "zf", BAND_UPPER)


def test_per_ap_se_single_link_recompute():
    sc = manual_scenario([[0, 0]], [[7, 0]], angle=0.8)
    f_eval = min(max(peak_frequency(PARAMS.cutoff_frequency, 0.8),
                     PARAMS.cutoff_frequency * (1 + 1e-9)), BAND_UPPER)
    h = build_channel(sc, PARAMS, f_eval)
    w = precode(h, "zf")
    gamma = sinr(h, w, sc.tx_psd, sc.noise_psd)[0]
    want = float(np.log2(1.0 + gamma))
    got = per_ap_spectral_efficiency((0,), sc, PARAMS, "zf", BAND_UPPER)
    assert got == pytest.approx(want, rel=1e-12)


def test_per_ap_se_negligible_ap_halves_score():
    near = manual_scenario([[0, 0]], [[7, 0]])
    both = manual_scenario([[0, 0], [1e12, 0]], [[7, 0]])
    alone = per_ap_spectral_efficiency((0,), near, PARAMS, "zf", BAND_UPPER)
    padded = per_ap_spectral_efficiency((0, 1), both, PARAMS, "zf", BAND_UPPER)
    assert padded == pytest.approx(alone / 2.0, rel=1e-9)


def test_per_ap_se_mrt_fallback_on_singular_channel():
    # two UEs at the same spot make zero forcing singular; the score must
    # come back finite through the maximum-ratio fallback
    sc = manual_scenario([[0, 0], [50, 0]], [[7, 0], [7, 0]])
    got = per_ap_spectral_efficiency((0, 1), sc, PARAMS, "zf", BAND_UPPER)
    assert np.isfinite(got) and got > 0.0


# ---------------------------------------------------------------------------
# void folding and hierarchical merging
# ---------------------------------------------------------------------------

def test_merge_void_keeps_serving_partition():
    sc = manual_scenario([[0, 0], [30, 0], [1000, 0]],
                         [[5, 0], [995, 0]])
    clusters = [(0,), (1,), (2,)]        # AP 1 serves nobody
    out = merge_void_clusters(clusters, sc, PARAMS, BAND_UPPER)
    assert_partition(out, 3)
    assert len(out) == 2
    # the void AP joined whichever merge scored the higher per-AP SE
    score_left = per_ap_spectral_efficiency((0, 1), sc, PARAMS, "zf",
                                            BAND_UPPER)
    score_right = per_ap_spectral_efficiency((1, 2), sc, PARAMS, "zf",
                                             BAND_UPPER)
    expected_home = (0, 1) if score_left >= score_right else (1, 2)
    assert expected_home in out


def test_merge_void_without_serving_cluster_is_identity():
    sc = manual_scenario([[1000, 0], [2000, 0], [0, 0]], [[5, 0]])
    # the serving AP (index 2) is outside every listed cluster
    out = merge_void_clusters([(0,), (1,)], sc, PARAMS, BAND_UPPER)
    assert out == [(0,), (1,)]


def test_merge_void_never_grows_cluster_count():
    for seed in range(4):
        sc = make_scenario(num_aps=10, num_ues=3, seed=seed)
        rng = np.random.default_rng(seed)
        clusters = kmeans_clusters(sc.ap_positions, 5, rng)
        out = merge_void_clusters(clusters, sc, PARAMS, BAND_UPPER)
        assert_partition(out, 10)
        assert len(out) <= len(clusters)
        # every surviving cluster serves somebody
        rss = rss_matrix(sc, PARAMS, BAND_UPPER)
        serving = set(np.argmax(rss, axis=1).tolist())
        assert all(set(c) & serving for c in out)


def test_hierarchical_merge_single_cluster_identity():
    sc = make_scenario(seed=7)
    out = hierarchical_merge([tuple(range(8))], sc, PARAMS, BAND_UPPER)
    assert out == [tuple(range(8))]


def test_hierarchical_merge_joins_near_stays_far():
    """Two AP groups at workable spacing merge; a group so remote that its
    links add nothing (amplitude below double precision of the near links)
    ties the improvement test exactly and stays apart."""
    far = 1e12
    sc = manual_scenario([[0, 0], [60, 0], [far, 0], [far + 60, 0]],
                         [[5, 0], [far + 5, 0]])
    clusters = [(0,), (1,), (2, 3)]
    out = hierarchical_merge(clusters, sc, PARAMS, BAND_UPPER)
    assert sorted(map(sorted, out)) == [[0, 1], [2, 3]]


def test_hierarchical_merge_gain_rule_matches_pair_scan():
    # one merge round replayed by hand: the merged pair is the one with the
    # largest strictly positive improvement over its weighted separate score
    sc = make_scenario(num_aps=6, num_ues=4, seed=8)
    clusters = [(0, 1), (2, 3), (4, 5)]
    scores = [per_ap_spectral_efficiency(c, sc, PARAMS, "zf", BAND_UPPER)
              for c in clusters]
    best_gain, best_pair = 0.0, None
    for i in range(3):
        for j in range(i + 1, 3):
            merged = tuple(sorted(clusters[i] + clusters[j]))
            score = per_ap_spectral_efficiency(merged, sc, PARAMS, "zf",
                                               BAND_UPPER)
            joint = (scores[i] * 2 + scores[j] * 2) / 4.0
            if score - joint > best_gain:
                best_gain, best_pair = score - joint, (i, j)
    out = hierarchical_merge(clusters, sc, PARAMS, BAND_UPPER)
    if best_pair is None:
        assert sorted(map(sorted, out)) == sorted(map(sorted, clusters))
    else:
        i, j = best_pair
        first_merge = tuple(sorted(clusters[i] + clusters[j]))
        assert any(set(first_merge) <= set(c) for c in out)


# ---------------------------------------------------------------------------
# end-to-end pipelines
# ---------------------------------------------------------------------------

def test_hierarchical_clustering_pipeline_invariants():
    for seed in range(3):
        sc = make_scenario(num_aps=12, num_ues=5, seed=seed)
        clustering = hierarchical_clustering(sc, PARAMS, BAND_UPPER)
        assert_partition(clustering.clusters, 12)
        assert clustering.ue_to_ap.shape == (5,)
        rss = rss_matrix(sc, PARAMS, BAND_UPPER)
        assert clustering.ue_to_ap.tolist() == np.argmax(rss, axis=1).tolist()
        # every cluster has a purpose once voids are folded in
        serving = set(clustering.ue_to_ap.tolist())
        for c in clustering.clusters:
            assert set(c) & serving


def test_kmeans_clustering_pipeline():
    sc = make_scenario(num_aps=12, num_ues=5, seed=1)
    a = kmeans_clustering(sc, PARAMS, BAND_UPPER, 3,
                          np.random.default_rng(42))
    b = kmeans_clustering(sc, PARAMS, BAND_UPPER, 3,
                          np.random.default_rng(42))
    assert a.clusters == b.clusters
    assert_partition(a.clusters, 12)
    assert 1 <= a.num_clusters <= 3


def test_write_clustering_csv():
    sc = make_scenario(num_aps=6, num_ues=3, seed=2)
    clustering = kmeans_clustering(sc, PARAMS, BAND_UPPER, 2,
                                   np.random.default_rng(0))
    buf = io.StringIO()
    write_clustering_csv(clustering, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "kind,index,serving_ap,cluster_index"
    assert len(lines) == 1 + 6 + 3

import logging
import math

import numpy as np
import pytest

from sepstat.errors import InputError
from sepstat.inference import bh_fdr
from sepstat.pairscan import (
    RESULT_FIELDS,
    ScanConfig,
    extract_pair,
    ingest,
    log2_plus_1,
    read_labels,
    read_matrix,
    results_csv,
    scan_pairs,
    write_pair_csv,
)
from sepstat.separability import LabeledSample, min_errors


def write_matrix(path, genes, samples, values, sep="\t"):
    lines = [sep.join(["gene", *samples])]
    for g, row in zip(genes, values):
        lines.append(sep.join([g, *[str(v) for v in row]]))
    path.write_text("\n".join(lines) + "\n")


def write_labels(path, mapping, header=True):
    lines = ["sample_id\tclass"] if header else []
    lines += [f"{s}\t{c}" for s, c in mapping.items()]
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def small(tmp_path):
    samples = [f"s{i}" for i in range(6)]
    rng = np.random.default_rng(0)
    values = rng.integers(0, 500, size=(3, 6))
    write_matrix(tmp_path / "m.tsv", ["g1", "g2", "g3"], samples, values)
    write_labels(tmp_path / "l.tsv", dict(zip(samples, "YYYZZZ")))
    return tmp_path


def planted(tmp_path, n_per=12, noise_genes=5, seed=1):
    rng = np.random.default_rng(seed)
    n = 2 * n_per
    samples = [f"p{i:02d}" for i in range(n)]
    labels = np.array([True] * n_per + [False] * n_per)
    # separable only along the diagonal: neither gene alone splits the classes
    t = 3.0 * rng.standard_normal(n)
    a = t + 0.2 * rng.standard_normal(n)
    b = -t + 0.2 * rng.standard_normal(n) + np.where(labels, 3.0, 0.0)
    noise = rng.standard_normal((noise_genes, n))
    genes = ["PLANT_A", "PLANT_B"] + [f"N{i}" for i in range(noise_genes)]
    write_matrix(tmp_path / "m.csv", genes, samples, np.vstack([a, b, noise]), sep=",")
    write_labels(tmp_path / "l.tsv", {s: "Y" if y else "Z" for s, y in zip(samples, labels)})
    return ingest(tmp_path / "m.csv", tmp_path / "l.tsv", transform="none")


class TestIngest:
    def test_fixture_shape(self, small):
        m, lab = ingest(small / "m.tsv", small / "l.tsv")
        assert m.values.shape == (3, 6)
        assert lab.counts() == (3, 3)

    def test_log_transform(self, tmp_path):
        assert log2_plus_1(np.array([7.0])).tolist() == [3.0]
        write_matrix(tmp_path / "m.tsv", ["g"], ["a", "b"], [[7, 0]])
        assert read_matrix(tmp_path / "m.tsv").values.tolist() == [[3.0, 0.0]]
        assert read_matrix(tmp_path / "m.tsv", "none").values.tolist() == [[7.0, 0.0]]

    def test_unlabeled_sample_dropped(self, tmp_path, caplog):
        samples = ["a", "b", "c", "d", "e"]
        write_matrix(tmp_path / "m.tsv", ["g1", "g2"], samples, [[1, 2, 3, 4, 5], [5, 4, 3, 2, 1]])
        write_labels(tmp_path / "l.tsv", {"a": "Y", "b": "Y", "c": "Z", "d": "Z"})
        with caplog.at_level(logging.WARNING):
            m, lab = ingest(tmp_path / "m.tsv", tmp_path / "l.tsv")
        assert m.sample_ids == ("a", "b", "c", "d")
        assert m.values.shape == (2, 4)
        assert any("e" in r.message and "no label" in r.message for r in caplog.records)

    def test_missing_values_drop_gene(self, tmp_path, caplog):
        write_matrix(tmp_path / "m.tsv", ["g1", "g2"], ["a", "b", "c", "d"], [[1, "NA", 3, 4], [1, 2, 3, 4]])
        with caplog.at_level(logging.WARNING):
            m = read_matrix(tmp_path / "m.tsv")
        assert m.gene_ids == ("g2",)
        assert any("g1" in r.message for r in caplog.records)

    def test_duplicate_gene(self, tmp_path):
        write_matrix(tmp_path / "m.tsv", ["g1", "g1"], ["a", "b"], [[1, 2], [3, 4]])
        with pytest.raises(InputError, match="duplicate gene"):
            read_matrix(tmp_path / "m.tsv")

    def test_malformed_header(self, tmp_path):
        (tmp_path / "m.tsv").write_text("gene\n")
        with pytest.raises(InputError, match="header"):
            read_matrix(tmp_path / "m.tsv")
        (tmp_path / "m2.tsv").write_text("gene\ta\t\tc\ng1\t1\t2\t3\n")
        with pytest.raises(InputError, match="header"):
            read_matrix(tmp_path / "m2.tsv")

    def test_ragged_rows(self, tmp_path):
        (tmp_path / "m.tsv").write_text("gene\ta\tb\ng1\t1\n")
        with pytest.raises(InputError):
            read_matrix(tmp_path / "m.tsv")

    def test_too_few_per_class(self, tmp_path):
        write_matrix(tmp_path / "m.tsv", ["g1", "g2"], ["a", "b", "c"], [[1, 2, 3], [3, 1, 2]])
        write_labels(tmp_path / "l.tsv", {"a": "Y", "b": "Z", "c": "Z"})
        with pytest.raises(InputError, match="at least 2"):
            ingest(tmp_path / "m.tsv", tmp_path / "l.tsv")

    def test_label_file_without_header(self, tmp_path):
        write_labels(tmp_path / "l.tsv", {"a": "1", "b": "0"}, header=False)
        assert read_labels(tmp_path / "l.tsv").classes == {"a": "Y", "b": "Z"}

    def test_bad_label(self, tmp_path):
        (tmp_path / "l.tsv").write_text("a\tY\nb\tmaybe\n")
        with pytest.raises(InputError):
            read_labels(tmp_path / "l.tsv")


class TestScan:
    def test_three_genes(self, small):
        m, lab = ingest(small / "m.tsv", small / "l.tsv")
        res = scan_pairs(m, lab)
        assert len(res) == 3
        assert {(r.gene_a, r.gene_b) for r in res} == {("g1", "g2"), ("g1", "g3"), ("g2", "g3")}

    def test_planted_pair_first(self, tmp_path):
        m, lab = planted(tmp_path)
        res = scan_pairs(m, lab, ScanConfig(assumption="normal"))
        top = res[0]
        assert (top.gene_a, top.gene_b) == ("PLANT_A", "PLANT_B")
        assert top.m_maxside == 0
        assert all(r.p_bound > top.p_bound for r in res[1:])

    def test_ordering_and_fdr(self, tmp_path):
        m, lab = planted(tmp_path, noise_genes=6, seed=3)
        res = scan_pairs(m, lab, ScanConfig(metric="total"))
        keys = [(r.q_value, r.p_bound, r.m_total, r.gene_a, r.gene_b) for r in res]
        assert keys == sorted(keys)
        p = [r.p_bound for r in res]
        assert np.allclose([r.q_value for r in res], bh_fdr(p))
        assert all(r.q_value >= r.p_bound for r in res)

    def test_deterministic_across_threads(self, tmp_path):
        m, lab = planted(tmp_path, noise_genes=6, seed=4)
        a = results_csv(scan_pairs(m, lab, ScanConfig(threads=1)))
        b = results_csv(scan_pairs(m, lab, ScanConfig(threads=4)))
        assert a == b

    def test_pair_list(self, tmp_path):
        m, lab = planted(tmp_path)
        res = scan_pairs(m, lab, ScanConfig(pairs=(("N1", "N0"), ("PLANT_B", "PLANT_A"))))
        assert {(r.gene_a, r.gene_b) for r in res} == {("N1", "N0"), ("PLANT_B", "PLANT_A")}
        with pytest.raises(InputError):
            scan_pairs(m, lab, ScanConfig(pairs=(("N1", "NOPE"),)))

    def test_rerun_single_pair(self, tmp_path):
        m, lab = planted(tmp_path, seed=6)
        for r in scan_pairs(m, lab)[:5]:
            path = tmp_path / f"{r.gene_a}_{r.gene_b}.csv"
            write_pair_csv(m, lab, r.gene_a, r.gene_b, path)
            again = min_errors(LabeledSample.read_csv(path))
            assert (again.min_errors_maxside, again.min_errors_total) == (r.m_maxside, r.m_total)
            direct = min_errors(extract_pair(m, lab, r.gene_a, r.gene_b))
            assert direct.min_errors_total == r.m_total

    def test_degenerate_pair_marked_failed(self, tmp_path):
        samples = list("abcdef")
        write_matrix(tmp_path / "m.tsv", ["tied", "g2", "g3"], samples,
                     [[1, 1, 1, 2, 2, 2], [1, 2, 3, 4, 5, 7], [2, 9, 4, 1, 7, 3]])
        write_labels(tmp_path / "l.tsv", dict(zip(samples, "YYYZZZ")))
        m, lab = ingest(tmp_path / "m.tsv", tmp_path / "l.tsv", "none")
        res = scan_pairs(m, lab)
        failed = [r for r in res if r.failed]
        assert {(r.gene_a, r.gene_b) for r in failed} >= {("tied", "g2")}
        assert res[-len(failed):] == failed
        assert all(math.isnan(r.p_bound) for r in failed)
        assert ",,,," in results_csv(res)
        rescued = scan_pairs(m, lab, ScanConfig(perturb_seed=0))
        assert not any(r.failed for r in rescued)

    def test_csv_schema(self, small):
        m, lab = ingest(small / "m.tsv", small / "l.tsv")
        text = results_csv(scan_pairs(m, lab))
        assert text.splitlines()[0] == ",".join(RESULT_FIELDS)
        assert len(text.splitlines()) == 4

    def test_needs_two_genes(self, tmp_path):
        write_matrix(tmp_path / "m.tsv", ["g"], list("abcd"), [[1, 2, 3, 4]])
        write_labels(tmp_path / "l.tsv", dict(zip("abcd", "YYZZ")))
        m, lab = ingest(tmp_path / "m.tsv", tmp_path / "l.tsv")
        with pytest.raises(InputError):
            scan_pairs(m, lab)

import numpy as np
import pytest

from catride import data
from catride.data import Dataset, SynthSpec, generate_clusters, preset_spec, split
from catride.errors import ConfigError, ParseError, SamplingError, ValidationError


def test_spec_validation():
    with pytest.raises(ConfigError):
        SynthSpec(class_count=1)
    with pytest.raises(ConfigError):
        SynthSpec(per_class=1)
    with pytest.raises(ConfigError):
        SynthSpec(cluster_spread=0.0)
    with pytest.raises(ConfigError):
        SynthSpec(center_separation=-0.1)


def test_preset_spec():
    sep = preset_spec("separated")
    ent = preset_spec("entangled", seed=7)
    assert sep.cluster_spread < ent.cluster_spread
    assert sep.center_separation > ent.center_separation
    assert ent.seed == 7
    with pytest.raises(ConfigError):
        preset_spec("bogus")


def test_generation_is_deterministic():
    spec = SynthSpec(class_count=3, per_class=5, dim=4, seed=9)
    a = generate_clusters(spec)
    b = generate_clusters(spec)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.labels, b.labels)
    c = generate_clusters(SynthSpec(class_count=3, per_class=5, dim=4, seed=10))
    assert not np.array_equal(a.inputs, c.inputs)


def test_generated_shape_box_and_separation():
    spec = SynthSpec(class_count=4, per_class=6, dim=5, seed=1,
                     cluster_spread=0.03, center_separation=0.3)
    ds = generate_clusters(spec)
    assert len(ds) == 24 and ds.dim == 5 and ds.class_count == 4
    assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0
    # per-class means sit roughly center_separation apart
    means = np.array([ds.inputs[ds.labels == c].mean(axis=0) for c in range(4)])
    iu = np.triu_indices(4, k=1)
    pair = np.linalg.norm(means[iu[0]] - means[iu[1]], axis=1)
    assert pair.mean() == pytest.approx(0.3, rel=0.15)


def test_generation_rejects_oversized_separation():
    with pytest.raises(ConfigError):
        generate_clusters(SynthSpec(dim=2, center_separation=5.0, seed=0))


def test_dataset_validation():
    with pytest.raises(ValidationError):
        Dataset(np.zeros((3, 2)) - 1.0, [0, 0, 1, 1][:3])
    with pytest.raises(ValidationError):
        Dataset(np.zeros((4, 2)), [0, 0, 1, 1], ids=[0, 0, 1, 2])
    with pytest.raises(ValidationError):
        Dataset(np.zeros((3, 2)), [0, 0, 1])  # singleton class


def test_csv_roundtrip_is_bitwise(tmp_path):
    ds = generate_clusters(SynthSpec(class_count=3, per_class=4, dim=3, seed=2))
    path = tmp_path / "ds.csv"
    data.save_csv(ds, path)
    back = data.load_csv(path)
    assert np.array_equal(back.inputs, ds.inputs)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.ids, ds.ids)
    assert "sha256" in back.provenance
    path2 = tmp_path / "ds2.csv"
    data.save_csv(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_csv_errors_carry_line_numbers(tmp_path):
    bad_header = tmp_path / "h.csv"
    bad_header.write_text("id,name,f0\n1,0,0.5\n")
    with pytest.raises(ParseError, match=":1:"):
        data.load_csv(bad_header)

    bad_row = tmp_path / "r.csv"
    bad_row.write_text("id,label,f0\n1,0,0.5\n2,zero,0.5\n")
    with pytest.raises(ParseError, match=":3:"):
        data.load_csv(bad_row)

    out_of_box = tmp_path / "b.csv"
    out_of_box.write_text("id,label,f0\n1,0,1.5\n")
    with pytest.raises(ValidationError, match=":2:"):
        data.load_csv(out_of_box)

    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(ValidationError):
        data.load_csv(empty)


def test_split_is_stratified_disjoint_and_deterministic():
    ds = generate_clusters(SynthSpec(class_count=3, per_class=10, dim=4, seed=3))
    tr, te = split(ds, 0.6, seed=5)
    assert len(tr) == 18 and len(te) == 12
    assert not set(tr.ids) & set(te.ids)
    for c in range(3):
        assert (tr.labels == c).sum() == 6
        assert (te.labels == c).sum() == 4
    tr2, te2 = split(ds, 0.6, seed=5)
    assert np.array_equal(tr.ids, tr2.ids) and np.array_equal(te.ids, te2.ids)
    tr3, _ = split(ds, 0.6, seed=6)
    assert not np.array_equal(tr.ids, tr3.ids)


def test_split_errors():
    ds = generate_clusters(SynthSpec(class_count=3, per_class=4, dim=4, seed=3))
    with pytest.raises(ConfigError):
        split(ds, 1.0, seed=0)
    with pytest.raises(SamplingError):
        split(ds, 0.9, seed=0)  # leaves fewer than 2 test samples per class

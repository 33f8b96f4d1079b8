import numpy as np
import pytest

from synthlidar.scene import generate_scene, get_template
from synthlidar.taxonomy import Taxonomy, default_taxonomy, load_taxonomy

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tax():
    return default_taxonomy()


@pytest.fixture(scope="session")
def demo():
    return get_template("demo")


@pytest.fixture(scope="session")
def demo_scene(tax, demo):
    plan = {tax.raw_id(n): 4 for n in ("car", "truck", "bicycle", "motorcycle", "person",
                                       "bicyclist", "motorcyclist")}
    plan[tax.raw_id("moving-car")] = 2
    plan[tax.raw_id("moving-person")] = 2
    return generate_scene(demo, plan, tax, seed=0)


def random_triangles(rng, n, spread=10.0, size=2.0):
    centers = rng.uniform(-spread, spread, (n, 1, 3))
    return centers + rng.normal(0, size, (n, 3, 3))


def random_rays(rng, n, spread=12.0):
    o = rng.uniform(-spread, spread, (n, 3))
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return o, d


@pytest.fixture(scope="session")
def small_job_factory(tax):
    from synthlidar.pipeline import GenerationJob, SequenceSpec

    def make(out, scans=3):
        plan0 = ((tax.raw_id("car"), 4), (tax.raw_id("person"), 6), (tax.raw_id("moving-car"), 1))
        plan1 = ((tax.raw_id("truck"), 2), (tax.raw_id("bicyclist"), 3))
        return GenerationJob([SequenceSpec(0, get_template("demo"), scans, plan0, 0),
                              SequenceSpec(1, get_template("suburb"), scans, plan1, 1)],
                             taxonomy=tax, out=out)
    return make


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, small_job_factory):
    """Two-sequence, three-scan dataset generated once per session."""
    from synthlidar.pipeline import run_generation

    out = tmp_path_factory.mktemp("ds")
    report = run_generation(small_job_factory(out))
    return out, report


def write_crafted(root, tax, scans):
    """Write sequences of label-only scans; ``scans[seq]`` is a list of {class name: count}."""
    from synthlidar import kittiio

    for seq, items in scans.items():
        d = kittiio.sequence_dir(root, seq)
        (d / "velodyne").mkdir(parents=True, exist_ok=True)
        (d / "labels").mkdir(parents=True, exist_ok=True)
        for i, counts in enumerate(items):
            sem = np.concatenate([np.full(n, tax.raw_id(c), dtype=np.uint32) for c, n in counts.items()])
            kittiio.write_scan(np.zeros((len(sem), 4), dtype=np.float32),
                               d / "velodyne" / (kittiio.scan_name(i) + ".bin"))
            kittiio.write_labels(kittiio.compose_label(sem, np.zeros_like(sem)),
                                 d / "labels" / (kittiio.scan_name(i) + ".label"))
    return root


def random_taxonomy(rng, n_raw=20):
    """``n_raw`` raw classes with random ids and a random remap (some to IGNORE)."""
    ids = rng.choice(np.arange(1, 300), n_raw, replace=False)
    targets = rng.integers(0, 20, n_raw)  # 0 = IGNORE
    names = ["IGNORE"] + list(Taxonomy(()).validation_classes)
    lines = [f"{i} c{i} static-world {names[t]} no" for i, t in zip(ids, targets)]
    return load_taxonomy("\n".join(lines)), ids

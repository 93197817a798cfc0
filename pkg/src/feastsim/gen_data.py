"""Regenerate the shipped data documents from their builders.

Run as ``python -m feastsim.gen_data`` after editing defaults, profiles, or
fixture definitions. Fixture files embed the final state hash of one
reference run, which replay tests then hold the implementation to.
"""

from pathlib import Path

from . import config, defaults
from .bt import serialize
from .canon import canon_document


def write_all(root=None):
    root = Path(root) if root else Path(__file__).parent
    trees_dir = root / "trees"
    profiles_dir = root / "profiles"
    trees_dir.mkdir(exist_ok=True)
    profiles_dir.mkdir(exist_ok=True)
    for tree_id, tree in defaults.build_default_trees().items():
        (trees_dir / f"{tree_id}.json").write_text(serialize(tree))
    for name, profile in config.build_profiles().items():
        (profiles_dir / f"{name}.json").write_text(canon_document(profile.to_doc()))
    return trees_dir, profiles_dir


def write_fixtures(fixtures_dir):
    from .fixture_defs import build_fixtures
    from .fixtures import check_fixture, scenario_of
    from .gateway import Gateway
    from .gateway_stub import StubAdapter
    from .transcript import run_scenario

    fixtures_dir = Path(fixtures_dir)
    fixtures_dir.mkdir(parents=True, exist_ok=True)
    for name, fixture in build_fixtures().items():
        sess = run_scenario(scenario_of(fixture), gateway=Gateway(StubAdapter()))
        check_fixture(fixture, sess)   # expectations must hold before freezing
        fixture["expected"]["state_hash"] = sess.transcript.final_hash()
        (fixtures_dir / f"{name}.json").write_text(canon_document(fixture))
    return fixtures_dir


if __name__ == "__main__":
    import sys

    trees_dir, profiles_dir = write_all()
    print(f"wrote {trees_dir} and {profiles_dir}")
    if "--fixtures" in sys.argv:
        out = write_fixtures(Path(__file__).resolve().parents[2] / "fixtures")
        print(f"wrote {out}")

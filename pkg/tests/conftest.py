import pytest


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid and "::" in nodeid:
                name = nodeid.split("::")[-1].removeprefix("test_")
                lines.append((name, "PASS" if status == "passed" else "FAIL"))
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name, verdict in lines:
            terminalreporter.write_line(f"  {verdict}  {name}")

from streetsurvey import fixture_path
from streetsurvey.codebook import Answer, parse_codebook
from streetsurvey.geo import load_region_geojson


@pytest.fixture(scope="session")
def quito_codebook_bytes():
    with open(fixture_path("quito_codebook.json"), "rb") as fh:
        return fh.read()


@pytest.fixture(scope="session")
def quito_codebook(quito_codebook_bytes):
    return parse_codebook(quito_codebook_bytes)


@pytest.fixture(scope="session")
def quito_region():
    with open(fixture_path("quito_region.geojson"), "rb") as fh:
        return load_region_geojson(fh.read())


def full_answers(floors=2, drains=1, sill="low_1_6", condition="fair"):
    """A complete, shape-valid answer set for the Quito fixture codebook."""
    return {
        "sill_height": Answer(choice=sill),
        "attachment": Answer(choices=frozenset({"detached"})),
        "floors": Answer(count=floors),
        "condition": Answer(choice=condition),
        "construction_status": Answer(choices=frozenset({"completed"})),
        "building_material": Answer(choices=frozenset({"brick"})),
        "occupancy": Answer(choice="occupied"),
        "roof_type": Answer(choices=frozenset({"tile"})),
        "land_use": Answer(choices=frozenset({"residential"})),
        "street_slope": Answer(choice="flat_low"),
        "drains": Answer(count=drains),
        "street_material": Answer(choices=frozenset({"paved_asphalt"})),
    }

from isamig.fleet.generate import REFUSAL_PRESET, FleetParams, generate_base_fleet, generate_fleet
from isamig.fleet.io import dumps, fleet_digest, load_fleet, loads, save_fleet
from isamig.fleet.model import (
    PHASES,
    Blueprint,
    Cell,
    Fleet,
    Isa,
    Job,
    Owner,
    Package,
    SourceFile,
    Target,
    blueprint_path,
    query_targets,
    topo_sort,
)

__all__ = [
    "PHASES", "REFUSAL_PRESET", "Blueprint", "Cell", "Fleet", "FleetParams", "Isa", "Job", "Owner",
    "Package", "SourceFile", "Target", "blueprint_path", "dumps", "fleet_digest", "generate_base_fleet",
    "generate_fleet", "load_fleet", "loads", "query_targets", "save_fleet", "topo_sort",
]

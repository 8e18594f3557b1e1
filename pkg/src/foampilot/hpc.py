"""Job execution substrate: serial run driving, SLURM resource discovery,
mesh-aware layout arithmetic, decomposition dict writing, batch-script
rendering, submission, and polling.

Scheduler interaction happens through a shell-runner handle (same shape as
the shell tool) so it inherits the session's approval policy and so tests
can replay recorded outputs.
"""

from __future__ import annotations

import math
import re
import shutil
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .foamdict import FoamDict, FoamScalar, serialize_dict

DEFAULT_CELLS_PER_CORE = 50000
DEFAULT_SOLVER = "fireFoam"
DEFAULT_LOG_NAME = "log.fireFoam"

SINFO_COMMAND = 'sinfo -h -o "%P %D %c"'


class NoPartitions(ValueError):
    pass


class CellCountNotFound(ValueError):
    pass


class CaseMissing(FileNotFoundError):
    pass


class MeshScriptMissing(FileNotFoundError):
    pass


class SubmitFailed(RuntimeError):
    def __init__(self, excerpt: str):
        super().__init__(f"sbatch failed: {excerpt}")
        self.excerpt = excerpt


class JobIdNotFound(RuntimeError):
    pass


class SchedulerUnavailable(RuntimeError):
    pass


class StageFailed(RuntimeError):
    def __init__(self, stage: str, exit_code: int | None, log_tail: str):
        super().__init__(f"stage {stage!r} failed with exit code {exit_code}")
        self.stage = stage
        self.exit_code = exit_code
        self.log_tail = log_tail


@dataclass(frozen=True)
class Partition:
    name: str
    node_count: int
    cores_per_node: int


@dataclass
class ClusterResources:
    partitions: list
    default_partition: str | None = None
    warning_count: int = 0


@dataclass(frozen=True)
class MeshStats:
    cell_count: int
    source_log: str = ""


@dataclass
class JobSpec:
    job_name: str
    partition: str
    nodes: int
    ntasks: int
    bashrc_path: str
    case_path: str
    solver: str = DEFAULT_SOLVER
    log_name: str = DEFAULT_LOG_NAME


class JobState(str, Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    COMPLETED = "Completed"
    FAILED = "Failed"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class JobStatus:
    job_id: int
    state: JobState


def parse_resources(sinfo_output: str) -> ClusterResources:
    """Parse `sinfo -h -o "%P %D %c"` output: one partition per line, the
    default marked with a trailing '*'. Lines for the same partition merge
    (node counts add up, sinfo reports them per node-state); malformed lines
    are counted, not fatal."""
    merged: dict = {}
    order: list = []
    default: str | None = None
    warnings = 0
    for line in sinfo_output.splitlines():
        line = line.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            warnings += 1
            continue
        name, nodes_s, cores_s = fields
        if name.endswith("*"):
            name = name[:-1]
            default = name
        try:
            nodes = int(nodes_s)
            cores = int(cores_s.rstrip("+"))
        except ValueError:
            warnings += 1
            continue
        if nodes < 1 or cores < 1 or not name:
            warnings += 1
            continue
        if name in merged:
            prev = merged[name]
            merged[name] = Partition(name, prev.node_count + nodes,
                                     max(prev.cores_per_node, cores))
        else:
            merged[name] = Partition(name, nodes, cores)
            order.append(name)
    if not merged:
        raise NoPartitions("no partitions parsed from sinfo output")
    return ClusterResources(partitions=[merged[n] for n in order],
                            default_partition=default,
                            warning_count=warnings)


_CELLS_RE = re.compile(r"cells:\s*([0-9]+)")


def parse_cell_count(log_text: str, source_log: str = "") -> MeshStats:
    """Last `cells:` figure in a mesh/checkMesh log wins: refinement stages
    print intermediate counts before the final mesh."""
    matches = _CELLS_RE.findall(log_text)
    if not matches:
        raise CellCountNotFound("no 'cells:' line found in log")
    count = int(matches[-1])
    if count <= 0:
        raise CellCountNotFound("cell count must be positive")
    return MeshStats(cell_count=count, source_log=source_log)


def choose_layout(cells: int, resources: ClusterResources,
                  cells_per_core: int = DEFAULT_CELLS_PER_CORE):
    """Pick (partition, nodes, ntasks): enough cores for cells_per_core
    cells per rank, clamped to the partition, and every chosen node fully
    filled."""
    if cells <= 0:
        raise ValueError("cells must be > 0")
    if cells_per_core <= 0:
        raise ValueError("cells_per_core must be > 0")
    if not resources.partitions:
        raise NoPartitions("cluster has no partitions")
    part = None
    if resources.default_partition is not None:
        for p in resources.partitions:
            if p.name == resources.default_partition:
                part = p
                break
    if part is None:
        part = resources.partitions[0]
    desired_cores = math.ceil(cells / cells_per_core)
    nodes = min(math.ceil(desired_cores / part.cores_per_node), part.node_count)
    ntasks = nodes * part.cores_per_node
    return part.name, nodes, ntasks


_BACKED_UP: set = set()


def reset_backup_memo() -> None:
    _BACKED_UP.clear()


def write_decompose_dict(case_root, ntasks: int) -> Path:
    """Write system/decomposeParDict for scotch decomposition; an existing
    file is kept as decomposeParDict.bak, created at most once per process
    so repeated writes cannot clobber the original."""
    root = Path(case_root)
    if not root.is_dir():
        raise CaseMissing(str(root))
    if ntasks < 1:
        raise ValueError("ntasks must be >= 1")
    system_dir = root / "system"
    system_dir.mkdir(exist_ok=True)
    target = system_dir / "decomposeParDict"
    key = str(target.resolve())
    if target.exists() and key not in _BACKED_UP:
        shutil.copyfile(target, target.with_suffix(".bak"))
        _BACKED_UP.add(key)
    node = FoamDict([
        ("FoamFile", FoamDict([
            ("version", FoamScalar(2.0, "float")),
            ("format", FoamScalar("ascii", "word")),
            ("class", FoamScalar("dictionary", "word")),
            ("object", FoamScalar("decomposeParDict", "word")),
        ])),
        ("numberOfSubdomains", FoamScalar(ntasks, "int")),
        ("method", FoamScalar("scotch", "word")),
    ])
    target.write_text(serialize_dict(node), encoding="utf-8")
    return target


def render_slurm_script(spec: JobSpec) -> str:
    """Batch script: shebang, SBATCH resource lines, then environment
    sourcing BEFORE any solver command."""
    return (
        "#!/bin/bash\n"
        f"#SBATCH --job-name={spec.job_name}\n"
        f"#SBATCH --partition={spec.partition}\n"
        f"#SBATCH --nodes={spec.nodes}\n"
        f"#SBATCH --ntasks={spec.ntasks}\n"
        f"#SBATCH --output={spec.log_name}.slurm\n"
        "\n"
        f"source {spec.bashrc_path}\n"
        f"cd {spec.case_path}\n"
        f"mpirun -np {spec.ntasks} {spec.solver} -parallel > {spec.log_name} 2>&1\n"
    )


_JOB_ID_RE = re.compile(r"Submitted batch job ([0-9]+)")


def submit(script_path, runner) -> JobStatus:
    """Run sbatch through the shell-runner handle and parse the job id from
    its acknowledgment line."""
    path = Path(script_path)
    if not path.exists():
        raise SubmitFailed(f"script not found: {path}")
    result = runner(f"sbatch {path}")
    if not result.ok:
        raise SubmitFailed(result.output[-500:])
    m = _JOB_ID_RE.search(result.output)
    if not m:
        raise JobIdNotFound(
            f"sbatch output had no job id line: {result.output[:200]!r}")
    return JobStatus(job_id=int(m.group(1)), state=JobState.PENDING)


_STATE_MAP = {
    "PENDING": JobState.PENDING,
    "RUNNING": JobState.RUNNING,
    "COMPLETING": JobState.RUNNING,
    "COMPLETED": JobState.COMPLETED,
    "FAILED": JobState.FAILED,
    "CANCELLED": JobState.FAILED,
    "TIMEOUT": JobState.FAILED,
    "NODE_FAIL": JobState.FAILED,
}


def _first_token(text: str) -> str | None:
    for line in text.splitlines():
        line = line.strip()
        if line:
            return line.split()[0].rstrip("+")
    return None


def poll_status(job_id: int, runner) -> JobStatus:
    """squeue for live state; empty output falls back to accounting
    (sacct) for the terminal state, else Unknown."""
    if job_id <= 0:
        raise ValueError("job_id must be > 0")
    result = runner(f"squeue -h -j {job_id} -o %T")
    if not result.ok and "not found" in result.output.lower() \
            and "job" not in result.output.lower():
        raise SchedulerUnavailable(result.output[:200])
    token = _first_token(result.output) if result.ok else None
    if token is None:
        acct = runner(f"sacct -j {job_id} -n -o State")
        if acct.ok:
            token = _first_token(acct.output)
    state = _STATE_MAP.get(token or "", JobState.UNKNOWN)
    return JobStatus(job_id=job_id, state=state)


def run_serial(case_root, bashrc_path, runner,
               solver: str = DEFAULT_SOLVER,
               log_name: str = DEFAULT_LOG_NAME) -> Path:
    """Mesh then solve in the case directory, each stage under a fresh
    `source {bashrc}` so FOAM environment variables are always loaded.
    Returns the solver log path; a nonzero stage aborts with its name."""
    root = Path(case_root)
    if not root.is_dir():
        raise CaseMissing(str(root))
    if not (root / "mesh.sh").exists():
        raise MeshScriptMissing(str(root / "mesh.sh"))
    stages = [
        ("mesh", f"source {bashrc_path} && ./mesh.sh"),
        ("solver", f"source {bashrc_path} && {solver} > {log_name} 2>&1"),
    ]
    for stage, command in stages:
        result = runner(command)
        if not result.ok:
            raise StageFailed(stage, result.exit_code, result.output[-2000:])
    return root / log_name

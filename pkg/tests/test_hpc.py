import pytest

from conftest import write_executable
from foampilot.foamdict import get_entry, parse_dict
from foampilot.hpc import (CaseMissing, CellCountNotFound, ClusterResources,
                           JobIdNotFound, JobSpec, JobState,
                           MeshScriptMissing, NoPartitions, Partition,
                           StageFailed, SubmitFailed, choose_layout,
                           parse_cell_count, parse_resources, poll_status,
                           render_slurm_script, reset_backup_memo, run_serial,
                           submit, write_decompose_dict)
from foampilot.tools import ApprovalMode, ToolResult, run_shell


@pytest.fixture(autouse=True)
def fresh_backup_memo():
    reset_backup_memo()
    yield
    reset_backup_memo()


class FakeRunner:
    """Maps command substrings to canned ToolResults, records every call."""

    def __init__(self, table):
        self.table = table
        self.calls = []

    def __call__(self, command):
        self.calls.append(command)
        for needle, result in self.table.items():
            if needle in command:
                return result
        raise AssertionError(f"unexpected command: {command!r}")


def ok(output, exit_code=0):
    return ToolResult(ok=True, output=output, exit_code=exit_code)


def fail(output, exit_code=1):
    return ToolResult(ok=False, output=output, exit_code=exit_code)


class TestParseResources:
    def test_single_default_partition(self):
        res = parse_resources("compute* 4 32\n")
        assert res.partitions == [Partition("compute", 4, 32)]
        assert res.default_partition == "compute"
        assert res.warning_count == 0

    def test_multiple_partitions(self):
        res = parse_resources("debug 2 16\ncompute* 4 32\nbigmem 1 128\n")
        assert [p.name for p in res.partitions] == ["debug", "compute", "bigmem"]
        assert res.default_partition == "compute"

    def test_same_partition_lines_merge(self):
        # sinfo emits one line per node state for the same partition
        res = parse_resources("compute* 3 32\ncompute 1 32\n")
        assert res.partitions == [Partition("compute", 4, 32)]

    def test_plus_suffix_on_cores(self):
        res = parse_resources("compute* 4 32+\n")
        assert res.partitions[0].cores_per_node == 32

    def test_malformed_lines_counted_not_fatal(self):
        res = parse_resources("junk\ncompute* 4 32\nalpha beta gamma\n\n")
        assert res.warning_count == 2
        assert res.partitions == [Partition("compute", 4, 32)]

    def test_empty_output(self):
        with pytest.raises(NoPartitions):
            parse_resources("")

    def test_all_malformed(self):
        with pytest.raises(NoPartitions):
            parse_resources("not a partition line\n")


class TestParseCellCount:
    def test_simple(self):
        stats = parse_cell_count("cells: 1600000\n", source_log="log.mesh")
        assert stats.cell_count == 1600000
        assert stats.source_log == "log.mesh"

    def test_last_count_wins(self):
        log = "cells: 4000\nrefining...\ncells: 32000\ncells: 1600000\n"
        assert parse_cell_count(log).cell_count == 1600000

    def test_inline_context(self):
        log = "Mesh stats\n    cells:            1600000\n    faces: 500\n"
        assert parse_cell_count(log).cell_count == 1600000

    def test_missing(self):
        with pytest.raises(CellCountNotFound):
            parse_cell_count("no mesh stats here\n")

    def test_zero_rejected(self):
        with pytest.raises(CellCountNotFound):
            parse_cell_count("cells: 0\n")


class TestChooseLayout:
    RES = parse_resources("compute* 4 32\n")

    def test_reference_case(self):
        assert choose_layout(1_600_000, self.RES, 50000) == ("compute", 1, 32)

    def test_larger_mesh_uses_more_nodes(self):
        assert choose_layout(10_000_000, self.RES, 50000) == ("compute", 4, 128)

    def test_clamps_to_partition(self):
        assert choose_layout(10**9, self.RES, 50000) == ("compute", 4, 128)

    def test_small_mesh_still_fills_one_node(self):
        assert choose_layout(100, self.RES, 50000) == ("compute", 1, 32)

    def test_exact_boundary(self):
        # 32 cores exactly: stays on one node; one cell more rolls over
        assert choose_layout(32 * 50000, self.RES, 50000) == ("compute", 1, 32)
        assert choose_layout(32 * 50000 + 1, self.RES, 50000) == ("compute", 2, 64)

    def test_default_partition_preferred(self):
        res = parse_resources("debug 2 16\ncompute* 4 32\n")
        assert choose_layout(1_600_000, res)[0] == "compute"

    def test_first_partition_when_no_default(self):
        res = parse_resources("debug 2 16\ncompute 4 32\n")
        assert choose_layout(1_600_000, res)[0] == "debug"

    def test_rejections(self):
        with pytest.raises(ValueError):
            choose_layout(0, self.RES)
        with pytest.raises(ValueError):
            choose_layout(100, self.RES, cells_per_core=0)
        with pytest.raises(NoPartitions):
            choose_layout(100, ClusterResources(partitions=[]))


class TestDecomposeDict:
    def test_writes_parsable_dict(self, tmp_path):
        (tmp_path / "system").mkdir()
        target = write_decompose_dict(tmp_path, 32)
        assert target == tmp_path / "system" / "decomposeParDict"
        text = target.read_text()
        assert "numberOfSubdomains 32;" in text
        d = parse_dict(text)
        assert get_entry(d, "numberOfSubdomains").value == 32
        assert get_entry(d, "method").value == "scotch"

    def test_creates_system_dir(self, tmp_path):
        write_decompose_dict(tmp_path, 8)
        assert (tmp_path / "system" / "decomposeParDict").exists()

    def test_existing_file_backed_up_once(self, tmp_path):
        system = tmp_path / "system"
        system.mkdir()
        original = "// my hand-tuned decomposition\nnumberOfSubdomains 4;\n"
        (system / "decomposeParDict").write_text(original)
        write_decompose_dict(tmp_path, 16)
        bak = system / "decomposeParDict.bak"
        assert bak.read_text() == original
        write_decompose_dict(tmp_path, 64)
        # second write must not overwrite the backup with generated content
        assert bak.read_text() == original
        assert "numberOfSubdomains 64;" in (system / "decomposeParDict").read_text()

    def test_missing_case(self, tmp_path):
        with pytest.raises(CaseMissing):
            write_decompose_dict(tmp_path / "absent", 4)

    def test_bad_ntasks(self, tmp_path):
        with pytest.raises(ValueError):
            write_decompose_dict(tmp_path, 0)


class TestSlurmScript:
    SPEC = JobSpec(job_name="burner", partition="compute", nodes=1, ntasks=32,
                   bashrc_path="/opt/foam/etc/bashrc",
                   case_path="/scratch/cases/burner")

    def test_exact_script(self):
        assert render_slurm_script(self.SPEC) == (
            "#!/bin/bash\n"
            "#SBATCH --job-name=burner\n"
            "#SBATCH --partition=compute\n"
            "#SBATCH --nodes=1\n"
            "#SBATCH --ntasks=32\n"
            "#SBATCH --output=log.fireFoam.slurm\n"
            "\n"
            "source /opt/foam/etc/bashrc\n"
            "cd /scratch/cases/burner\n"
            "mpirun -np 32 fireFoam -parallel > log.fireFoam 2>&1\n")

    def test_source_precedes_every_solver_line(self):
        script = render_slurm_script(self.SPEC)
        lines = script.splitlines()
        source_at = next(i for i, l in enumerate(lines) if l.startswith("source "))
        solver_lines = [i for i, l in enumerate(lines) if "fireFoam" in l
                        and not l.startswith("#")]
        assert solver_lines
        assert all(i > source_at for i in solver_lines)

    def test_custom_solver_and_log(self):
        spec = JobSpec(job_name="x", partition="p", nodes=2, ntasks=64,
                       bashrc_path="/b", case_path="/c",
                       solver="reactingFoam", log_name="log.react")
        script = render_slurm_script(spec)
        assert "mpirun -np 64 reactingFoam -parallel > log.react 2>&1" in script
        assert "#SBATCH --nodes=2" in script


class TestSubmit:
    def test_job_id_parsed(self, tmp_path):
        script = tmp_path / "job.sh"
        script.write_text("#!/bin/bash\n")
        runner = FakeRunner({"sbatch": ok("Submitted batch job 4242\n")})
        status = submit(script, runner)
        assert status.job_id == 4242
        assert status.state is JobState.PENDING
        assert runner.calls == [f"sbatch {script}"]

    def test_missing_script(self, tmp_path):
        with pytest.raises(SubmitFailed):
            submit(tmp_path / "absent.sh", FakeRunner({}))

    def test_sbatch_failure(self, tmp_path):
        script = tmp_path / "job.sh"
        script.write_text("#!/bin/bash\n")
        runner = FakeRunner({"sbatch": fail("sbatch: error: invalid partition")})
        with pytest.raises(SubmitFailed, match="invalid partition"):
            submit(script, runner)

    def test_ack_without_job_id(self, tmp_path):
        script = tmp_path / "job.sh"
        script.write_text("#!/bin/bash\n")
        runner = FakeRunner({"sbatch": ok("queued maybe?\n")})
        with pytest.raises(JobIdNotFound):
            submit(script, runner)


class TestPollStatus:
    @pytest.mark.parametrize("squeue_out,state", [
        ("PENDING\n", JobState.PENDING),
        ("RUNNING\n", JobState.RUNNING),
        ("COMPLETING\n", JobState.RUNNING),
    ])
    def test_live_states(self, squeue_out, state):
        runner = FakeRunner({"squeue": ok(squeue_out)})
        assert poll_status(4242, runner).state is state

    @pytest.mark.parametrize("sacct_out,state", [
        ("COMPLETED\n", JobState.COMPLETED),
        ("COMPLETED+\n", JobState.COMPLETED),
        ("FAILED\n", JobState.FAILED),
        ("CANCELLED\n", JobState.FAILED),
        ("TIMEOUT\n", JobState.FAILED),
        ("NODE_FAIL\n", JobState.FAILED),
    ])
    def test_finished_jobs_fall_back_to_sacct(self, sacct_out, state):
        runner = FakeRunner({"squeue": ok(""), "sacct": ok(sacct_out)})
        status = poll_status(4242, runner)
        assert status.state is state
        assert any("sacct" in c for c in runner.calls)

    def test_unknown_when_both_empty(self):
        runner = FakeRunner({"squeue": ok(""), "sacct": ok("")})
        assert poll_status(4242, runner).state is JobState.UNKNOWN

    def test_sacct_not_consulted_while_live(self):
        runner = FakeRunner({"squeue": ok("RUNNING\n")})
        poll_status(4242, runner)
        assert all("sacct" not in c for c in runner.calls)

    def test_bad_job_id(self):
        with pytest.raises(ValueError):
            poll_status(0, FakeRunner({}))


class TestRunSerial:
    def make_runner(self, tmp_path):
        return lambda command: run_shell(command, tmp_path,
                                         mode=ApprovalMode.AUTO)

    def setup_case(self, tmp_path, mesh_body="echo meshing",
                   solver_body="echo 'stub solver ran: SENTINEL-7f3a'"):
        write_executable(tmp_path / "mesh.sh", mesh_body)
        bindir = tmp_path / "bin"
        bindir.mkdir()
        write_executable(bindir / "fireFoam", solver_body)
        bashrc = tmp_path / "bashrc"
        bashrc.write_text(f"export PATH={bindir}:$PATH\n")
        return bashrc

    def test_mesh_then_solve(self, tmp_path):
        bashrc = self.setup_case(tmp_path)
        log = run_serial(tmp_path, bashrc, self.make_runner(tmp_path))
        assert log == tmp_path / "log.fireFoam"
        assert "SENTINEL-7f3a" in log.read_text()

    def test_command_sequence(self, tmp_path):
        bashrc = self.setup_case(tmp_path)
        runner = FakeRunner({"mesh.sh": ok(""), "fireFoam": ok("")})
        run_serial(tmp_path, bashrc, runner)
        assert runner.calls == [
            f"source {bashrc} && ./mesh.sh",
            f"source {bashrc} && fireFoam > log.fireFoam 2>&1",
        ]

    def test_mesh_failure_names_stage(self, tmp_path):
        bashrc = self.setup_case(tmp_path,
                                 mesh_body="echo mesh exploded >&2; exit 3")
        with pytest.raises(StageFailed) as exc:
            run_serial(tmp_path, bashrc, self.make_runner(tmp_path))
        assert exc.value.stage == "mesh"
        assert exc.value.exit_code == 3
        assert "mesh exploded" in exc.value.log_tail

    def test_solver_failure_names_stage(self, tmp_path):
        bashrc = self.setup_case(tmp_path, solver_body="exit 9")
        with pytest.raises(StageFailed) as exc:
            run_serial(tmp_path, bashrc, self.make_runner(tmp_path))
        assert exc.value.stage == "solver"

    def test_solver_not_run_after_mesh_failure(self, tmp_path):
        bashrc = self.setup_case(tmp_path, mesh_body="exit 1")
        runner = FakeRunner({"mesh.sh": fail("boom"), "fireFoam": ok("")})
        with pytest.raises(StageFailed):
            run_serial(tmp_path, bashrc, runner)
        assert len(runner.calls) == 1

    def test_missing_case(self, tmp_path):
        with pytest.raises(CaseMissing):
            run_serial(tmp_path / "absent", "/b", FakeRunner({}))

    def test_missing_mesh_script(self, tmp_path):
        with pytest.raises(MeshScriptMissing):
            run_serial(tmp_path, "/b", FakeRunner({}))

    def test_custom_solver(self, tmp_path):
        write_executable(tmp_path / "mesh.sh", "echo ok")
        runner = FakeRunner({"mesh.sh": ok(""), "myFoam": ok("")})
        run_serial(tmp_path, "/b", runner, solver="myFoam",
                   log_name="log.myFoam")
        assert runner.calls[1] == "source /b && myFoam > log.myFoam 2>&1"

"""
End-to-end tests for the command-line surface.
"""

import os
import json
import shutil
import tempfile

import pytest
import pandas as pd

# Add the parent directory to the path to import qpreduce modules
import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent))

from qpreduce.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, build_parser, run
from qpreduce.config import DEFAULT_FIELD_PATH


@pytest.mark.integration
class TestCommands:
    """Test cases for subcommands and exit codes"""

    @pytest.fixture
    def temp_dir(self):
        """Create temporary directory for test files"""
        temp_dir = tempfile.mkdtemp()
        yield temp_dir
        shutil.rmtree(temp_dir)

    def test_parser_commands(self):
        """Test that every stage and 'all' are subcommands"""
        args = build_parser().parse_args(['scan', '--grid-size', '2000', '--epsilon', '0.01,0.005'])
        assert args.command == 'scan'
        assert args.grid_size == 2000
        assert args.epsilon == (0.01, 0.005)

    def test_bryuno(self, temp_dir):
        """Test the Bryuno table"""
        assert run(['bryuno', '--output-dir', temp_dir]) == EXIT_OK
        frame = pd.read_csv(os.path.join(temp_dir, 'bryuno.csv'))
        assert list(frame.columns) == ['n', 'alpha_n', 'gamma_n', 'partial_bryuno_sum']
        assert len(frame) == 7

    def test_solve(self, temp_dir):
        """Test that solve writes the coefficients, the summary and the series"""
        assert run(['solve', '--field', DEFAULT_FIELD_PATH, '--output-dir', temp_dir]) == EXIT_OK
        for name in ('coefficients.jsonl', 'summary.csv', 'series.joblib'):
            assert os.path.exists(os.path.join(temp_dir, name))
        with open(os.path.join(temp_dir, 'coefficients.jsonl')) as f:
            records = [json.loads(line) for line in f]
        assert {r['k'] for r in records} == {1, 2, 3}

    def test_trees_with_dot_output(self, temp_dir):
        """Test the tree oracle and the Graphviz dump"""
        dot_dir = os.path.join(temp_dir, 'dot')
        assert run(['trees', '--output-dir', temp_dir, '--dot-dir', dot_dir]) == EXIT_OK
        assert os.path.exists(os.path.join(temp_dir, 'trees.csv'))
        assert any(name.endswith('.dot') for name in os.listdir(dot_dir))

    def test_empty_field(self, temp_dir):
        """Test that the zero field is a trivial successful run"""
        path = os.path.join(temp_dir, 'zero.jsonl')
        open(path, 'w').close()
        assert run(['solve', '--field', path, '--output-dir', temp_dir]) == EXIT_OK

    def test_missing_field(self, temp_dir):
        """Test that a missing field file is an I/O error"""
        code = run(['solve', '--field', os.path.join(temp_dir, 'absent.jsonl'), '--output-dir', temp_dir])
        assert code == EXIT_USAGE

    def test_malformed_field(self, temp_dir):
        """Test that a malformed field file is a usage error"""
        path = os.path.join(temp_dir, 'bad.jsonl')
        with open(path, 'w') as f:
            f.write('{"form": "complex"}\n{"nu": [1, 0], "m": [0.0, 1.0]}\n')
        assert run(['solve', '--field', path, '--output-dir', temp_dir]) == EXIT_USAGE

    def test_small_divisor_is_domain_error(self, temp_dir):
        """Test that lambda0 on the c resonance fails with status 1"""
        assert run(['solve', '--lambda0', '0.5', '--output-dir', temp_dir]) == EXIT_FAILED

    def test_usage_errors(self, temp_dir):
        """Test unknown commands, bad flags and conflicting verbosity"""
        assert run(['reduce']) == EXIT_USAGE
        assert run([]) == EXIT_USAGE
        assert run(['solve', '--K', 'three']) == EXIT_USAGE
        assert run(['solve', '--verbose', '--quiet', '--output-dir', temp_dir]) == EXIT_USAGE

    def test_help(self):
        """Test that --help exits cleanly"""
        assert run(['--help']) == EXIT_OK

    def test_bad_config(self, temp_dir):
        """Test that an unknown config key is a usage error"""
        path = os.path.join(temp_dir, 'run.conf')
        with open(path, 'w') as f:
            f.write('alpha = 0.5\n')
        assert run(['solve', '--config', path, '--output-dir', temp_dir]) == EXIT_USAGE

    def test_invalid_setting(self, temp_dir):
        """Test that an out-of-range setting is a usage error"""
        assert run(['solve', '--N-check', '128', '--output-dir', temp_dir]) == EXIT_USAGE

    @pytest.mark.slow
    def test_all(self, temp_dir):
        """Test the full pipeline on the default settings"""
        code = run(['all', '--output-dir', temp_dir])
        assert code == EXIT_OK
        with open(os.path.join(temp_dir, 'run_summary.json')) as f:
            summary = json.load(f)
        assert summary['passed'] is True
        assert list(summary['stages']) == ['bryuno', 'solve', 'trees', 'renorm', 'verify', 'scan']
        assert summary['stages']['scan']['constant_stable'] is True
        assert 3.5 <= summary['stages']['verify']['deviation_exponent'] <= 4.5
        for name in ('bryuno.csv', 'trees.csv', 'renorm_checks.csv', 'verify.csv', 'scan.csv',
                     'scan_summary.json'):
            assert os.path.exists(os.path.join(temp_dir, name))


if __name__ == "__main__":
    pytest.main([__file__])

import os
import json
import joblib
import pandas as pd
from typing import Any, Dict, Iterable, List
import logging

logger = logging.getLogger(__name__)

ARTIFACT_SUFFIXES = ('.csv', '.jsonl', '.json', '.joblib')

# Artifacts each subcommand is expected to leave behind
REQUIRED_ARTIFACTS: Dict[str, List[str]] = {
    'bryuno': ['bryuno.csv'],
    'solve': ['coefficients.jsonl', 'summary.csv', 'series.joblib'],
    'trees': ['trees.csv'],
    'renorm': ['renorm_table.csv', 'renorm_checks.csv'],
    'verify': ['verify.csv'],
    'scan': ['scan.csv', 'scan_summary.json'],
}


def ensure_output_dir(output_dir: str = 'results') -> str:
    """Ensure output directory exists"""
    os.makedirs(output_dir, exist_ok=True)
    return output_dir


def save_artifact(obj: Any, filename: str, output_dir: str = 'results') -> str:
    """Persist a Python object with joblib"""
    ensure_output_dir(output_dir)
    filepath = os.path.join(output_dir, filename)
    joblib.dump(obj, filepath)
    logger.info(f"Artifact saved to {filepath}")
    return filepath


def load_artifact(filename: str, output_dir: str = 'results') -> Any:
    """Load a joblib artifact"""
    filepath = os.path.join(output_dir, filename)
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"Artifact file not found: {filepath}")

    obj = joblib.load(filepath)
    logger.info(f"Artifact loaded from {filepath}")
    return obj


def save_table(df: pd.DataFrame, filename: str, output_dir: str = 'results') -> str:
    """Write a DataFrame as CSV"""
    ensure_output_dir(output_dir)
    filepath = os.path.join(output_dir, filename)
    df.to_csv(filepath, index=False)
    logger.info(f"Table saved to {filepath} ({len(df)} rows)")
    return filepath


def save_json(payload: Dict[str, Any], filename: str, output_dir: str = 'results') -> str:
    """Write a JSON summary"""
    ensure_output_dir(output_dir)
    filepath = os.path.join(output_dir, filename)
    with open(filepath, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
    logger.info(f"Summary saved to {filepath}")
    return filepath


def save_jsonl(records: Iterable[Dict[str, Any]], filename: str, output_dir: str = 'results') -> str:
    """Write one JSON object per line"""
    ensure_output_dir(output_dir)
    filepath = os.path.join(output_dir, filename)
    count = 0
    with open(filepath, 'w') as f:
        for record in records:
            f.write(json.dumps(record) + '\n')
            count += 1
    logger.info(f"{count} records saved to {filepath}")
    return filepath


def list_artifacts(output_dir: str = 'results') -> list:
    """List all artifact files in the output directory"""
    if not os.path.exists(output_dir):
        return []

    files = [f for f in os.listdir(output_dir) if f.endswith(ARTIFACT_SUFFIXES)]
    return sorted(files)


def get_artifact_info(output_dir: str = 'results', commands: Iterable[str] = ()) -> Dict[str, Any]:
    """Report which expected artifacts are present"""
    artifacts = list_artifacts(output_dir)
    info = {
        'output_dir': output_dir,
        'available_artifacts': artifacts,
        'total_artifacts': len(artifacts)
    }

    required = [name for command in commands for name in REQUIRED_ARTIFACTS.get(command, [])]
    missing = [name for name in required if name not in artifacts]

    info['missing_artifacts'] = missing
    info['is_ready'] = len(missing) == 0

    return info

"""
JSON-lines Fourier field files.

Line 1 is a header {"form": "real"} or {"form": "complex"}; every further line
is {"nu": [ints], "m": [re11, im11, re12, im12, re21, im21, re22, im22]}.
Files written by save_field are canonical (lexicographic in nu) and load/save
round-trips them byte for byte.
"""

import json
import logging
import os
from typing import Union

import numpy as np

from qpreduce.errors import FieldFormatError, ValidationError
from qpreduce.model import ComplexMatrixField, RealMatrixField, complex_reduce

logger = logging.getLogger(__name__)

FORMS = {'real': RealMatrixField, 'complex': ComplexMatrixField}

AnyField = Union[RealMatrixField, ComplexMatrixField]


def load_field(path: str) -> AnyField:
    """Read and validate a field file; an empty file is the zero field"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Field file not found: {path}")
    with open(path, 'r') as f:
        lines = [line for line in f.read().splitlines() if line.strip()]
    if not lines:
        logger.info(f"{path} is empty: using the zero field")
        return ComplexMatrixField({})

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise FieldFormatError(f"{path}:1: header is not valid JSON ({e})") from e
    if not isinstance(header, dict) or header.get('form') not in FORMS:
        raise FieldFormatError(f"{path}:1: header must be {{\"form\": \"real\"|\"complex\"}}, got {lines[0]!r}")
    cls = FORMS[header['form']]

    coefficients = {}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
            nu = tuple(int(v) for v in record['nu'])
            values = [float(v) for v in record['m']]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FieldFormatError(f"{path}:{lineno}: malformed record ({e})") from e
        if len(values) != 8:
            raise FieldFormatError(f"{path}:{lineno}: expected 8 numbers in 'm', got {len(values)}")
        if nu in coefficients:
            raise FieldFormatError(f"{path}:{lineno}: duplicate mode nu={nu}")
        pairs = np.array(values).reshape(4, 2)
        coefficients[nu] = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(2, 2)

    try:
        field = cls(coefficients).validate()
    except ValidationError as e:
        raise FieldFormatError(f"{path}: {e}") from e
    logger.info(f"Loaded {header['form']} field with {len(field.coefficients)} modes from {path}")
    return field


def save_field(field: AnyField, path: str) -> str:
    """Write the canonical form of a field"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as f:
        f.write(json.dumps({'form': field.form}) + '\n')
        for record in field.to_records():
            f.write(json.dumps(record) + '\n')
    logger.info(f"Field with {len(field.coefficients)} modes saved to {path}")
    return path


def as_complex(field: AnyField) -> ComplexMatrixField:
    """Complex-frame version of a loaded field"""
    if isinstance(field, ComplexMatrixField):
        return field
    return complex_reduce(field)

"""
Reader and writer for LIBSVM sparse text files: `label idx:val idx:val ...`
with 1-based, strictly increasing feature indices.
"""
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional

import numpy as np
import scipy.sparse as sp
from sklearn.datasets import dump_svmlight_file

logger = logging.getLogger(__name__)


class LibSVMParseError(ValueError):
    """Malformed LIBSVM content; line_number is 1-based."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass
class DatasetTable:
    """
    Samples (rows of a sparse matrix) with binary labels in {-1, +1}.

    Args:
        samples: m x n CSR matrix
        labels: Length-m vector of -1/+1
        scaled: Whether every feature column has been scaled into [-1, 1]
        name: Dataset name, usually the file stem
    """
    samples: sp.csr_matrix
    labels: np.ndarray
    scaled: bool = False
    name: str = ""

    @property
    def shape(self):
        return self.samples.shape

    def binary_labels(self) -> np.ndarray:
        """Labels as {0, 1} for the logistic model."""
        return (self.labels > 0).astype(float)


class LibSVMParser:
    """Parser for LIBSVM-format datasets."""

    @staticmethod
    def parse_file(filepath: str, n_features: Optional[int] = None) -> DatasetTable:
        """
        Parse a LIBSVM file into a DatasetTable.

        Args:
            filepath: Path to the file
            n_features: Number of columns; defaults to the largest index seen

        Returns:
            Unscaled DatasetTable with labels mapped to {-1, +1}
        """
        if not os.path.exists(filepath):
            raise FileNotFoundError(f"File not found: {filepath}")

        with open(filepath, "r") as f:
            table = LibSVMParser.parse_lines(f, n_features=n_features)
        table.name = os.path.splitext(os.path.basename(filepath))[0]
        logger.info(f"Loaded {table.shape[0]} samples with {table.shape[1]} features from {filepath}")
        return table

    @staticmethod
    def parse_lines(lines: Iterable[str], n_features: Optional[int] = None) -> DatasetTable:
        """
        Parse LIBSVM lines. Blank lines and '#' comments are skipped.

        Raises:
            LibSVMParseError: on a bad token or non-increasing indices
            ValueError: when there are no samples at all
        """
        raw_labels = []
        rows, cols, vals = [], [], []

        for line_number, line in enumerate(lines, 1):
            content = line.split("#", 1)[0].strip()
            if not content:
                continue
            tokens = content.split()

            try:
                label = float(tokens[0])
            except ValueError:
                raise LibSVMParseError(f"bad label '{tokens[0]}'", line_number)

            row = len(raw_labels)
            previous = 0
            for token in tokens[1:]:
                index_text, sep, value_text = token.partition(":")
                if not sep:
                    raise LibSVMParseError(f"bad token '{token}' (expected idx:val)", line_number)
                try:
                    index = int(index_text)
                    value = float(value_text)
                except ValueError:
                    raise LibSVMParseError(f"bad token '{token}'", line_number)
                if index < 1:
                    raise LibSVMParseError(f"feature index {index} is not 1-based", line_number)
                if index <= previous:
                    raise LibSVMParseError(
                        f"feature indices must increase ({index} after {previous})", line_number
                    )
                if not np.isfinite(value):
                    raise LibSVMParseError(f"non-finite value in '{token}'", line_number)
                previous = index
                rows.append(row)
                cols.append(index - 1)
                vals.append(value)
            raw_labels.append(label)

        if not raw_labels:
            raise ValueError("LIBSVM input contains no samples")

        max_index = max(cols) + 1 if cols else 0
        if n_features is None:
            n_features = max_index
        elif n_features < max_index:
            raise ValueError(f"n_features={n_features} but index {max_index} appears in the data")

        samples = sp.csr_matrix(
            (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols, dtype=int))),
            shape=(len(raw_labels), n_features),
        )
        return DatasetTable(samples=samples, labels=LibSVMParser.map_labels(np.asarray(raw_labels)))

    @staticmethod
    def map_labels(raw: np.ndarray) -> np.ndarray:
        """
        Map binary labels onto {-1, +1}: {0, 1} sends 0 to -1; any other pair
        sends the smaller value to -1.
        """
        values = set(np.unique(raw).tolist())
        if values <= {-1.0, 1.0}:
            return raw.astype(float)
        if values <= {0.0, 1.0}:
            return np.where(raw > 0, 1.0, -1.0)
        if len(values) == 2:
            low, high = sorted(values)
            logger.warning(f"Mapping labels {low:g} -> -1 and {high:g} -> +1")
            return np.where(raw == high, 1.0, -1.0)
        raise ValueError(f"Expected binary labels, found {len(values)} distinct values")

    @staticmethod
    def write_file(table: DatasetTable, filepath: str) -> str:
        """
        Write a DatasetTable in LIBSVM format with 1-based indices.

        Returns:
            The path written
        """
        directory = os.path.dirname(filepath)
        if directory:
            os.makedirs(directory, exist_ok=True)
        dump_svmlight_file(table.samples, table.labels, filepath, zero_based=False)
        logger.info(f"Saved {table.shape[0]} samples to {filepath}")
        return filepath

    @staticmethod
    def generate_summary(table: DatasetTable) -> Dict[str, Any]:
        """
        Summary of a dataset: dimensions, nonzeros and label balance.
        """
        m, n = table.shape
        nnz = int(table.samples.nnz)
        return {
            "name": table.name,
            "samples": m,
            "features": n,
            "nnz": nnz,
            "density": nnz / float(m * n) if m * n else 0.0,
            "positive": int(np.sum(table.labels > 0)),
            "negative": int(np.sum(table.labels < 0)),
            "scaled": table.scaled,
        }


def read_libsvm(path: str, n_features: Optional[int] = None) -> DatasetTable:
    return LibSVMParser.parse_file(path, n_features=n_features)


def write_libsvm(table: DatasetTable, path: str) -> str:
    return LibSVMParser.write_file(table, path)


def summarize_table(table: DatasetTable) -> Dict[str, Any]:
    return LibSVMParser.generate_summary(table)

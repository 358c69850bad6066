"""
Experiment harness: synthetic compressed-sensing and classification
instances, dataset scaling, lambda selection rules, metrics, the two
benchmark drivers and their CSV / trace output.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.special import expit

from src.models.problems import Problem, ProblemKind
from src.solver import SolveOptions, SolveReport, prox_grad, psnp
from src.utils.libsvm_parser import (
    DatasetTable,
    LibSVMParseError,
    read_libsvm,
    summarize_table,
    write_libsvm,
)
from src.utils.linear_ops import Matrix, matvec, rmatvec

logger = logging.getLogger(__name__)

__all__ = [
    "CsInstance", "DatasetTable", "LibSVMParseError", "MetricRow",
    "gen_cs", "gen_classification", "read_libsvm", "write_libsvm", "summarize_table",
    "scale_features", "lambda_rule_cs", "lambda_rule_svm", "svm_grad_tol",
    "metrics", "run_algorithm", "bench_cs", "bench_svm",
    "write_metrics_csv", "read_metrics_csv", "write_trace",
]

# lambda = a * ||A^T b||_inf for the compressed-sensing runs
CS_LAMBDA_CONSTANTS = {0.0: 0.02, 0.5: 0.03, 2.0 / 3.0: 0.04}
SVM_LAMBDA_FACTOR = 3e-4
DEFAULT_Q_VALUES = (0.0, 0.5, 2.0 / 3.0)
ALGORITHMS = ("psnp", "proxgrad")
SWEEP_PARAMS = ("m", "s", "nf")

CSV_COLUMNS = ["algo", "q", "f", "re_err", "acc", "nnz", "time", "iters", "status"]
TRACE_COLUMNS = ["k", "F", "grad_inf", "supp", "alpha", "beta", "newton"]
CSV_FLOAT_FORMAT = "%.6g"


@dataclass
class CsInstance:
    """
    Compressed-sensing instance b = A x_true + nf * eps.

    A has unit-norm columns and is dense unless density < 1.
    """
    A: Matrix
    b: np.ndarray
    x_true: np.ndarray
    s: int
    nf: float
    seed: int
    density: float = 1.0

    def problem(self, dense_threshold: int = 500) -> Problem:
        return Problem(ProblemKind.LEAST_SQUARES, self.A, self.b, dense_threshold=dense_threshold)


@dataclass
class MetricRow:
    """One line of a results table. Aggregated rows hold medians, so counts may be fractional."""
    algo: str
    q: float
    f_value: float
    re_err: Optional[float]
    acc: Optional[float]
    support_size: float
    time_seconds: float
    iterations: float
    status: str


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the stream depends only on the seed."""
    return np.random.Generator(np.random.PCG64(seed))


def _sparse_vector(rng: np.random.Generator, n: int, s: int) -> np.ndarray:
    """s-sparse vector with magnitudes uniform in [0.5, 1.5] and random signs."""
    x = np.zeros(n)
    support = rng.choice(n, size=s, replace=False)
    x[support] = rng.choice([-1.0, 1.0], size=s) * rng.uniform(0.5, 1.5, size=s)
    return x


def _normalize_columns(A: Matrix) -> Matrix:
    if sp.issparse(A):
        A = sp.csc_matrix(A)
        norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=0)).ravel())
        A.data /= np.repeat(norms, np.diff(A.indptr))
        return A
    return A / np.linalg.norm(A, axis=0)


def _sparse_gaussian(rng: np.random.Generator, m: int, n: int, density: float) -> sp.csc_matrix:
    A = sp.random(m, n, density=density, format="csc", random_state=rng, data_rvs=rng.standard_normal)
    empty = np.flatnonzero(np.diff(A.indptr) == 0)
    if empty.size == 0:
        return A
    logger.debug("Resampling %d empty columns", empty.size)
    A = A.tolil()
    for j in empty:
        rows = np.flatnonzero(rng.random(m) < density)
        while rows.size == 0:
            rows = np.flatnonzero(rng.random(m) < density)
        A[rows, j] = rng.standard_normal(rows.size)
    return A.tocsc()


def gen_cs(
    m: int,
    n: int,
    s: int,
    nf: float = 0.0,
    seed: int = 0,
    density: float = 1.0,
) -> CsInstance:
    """
    Generate a compressed-sensing instance.

    Args:
        m: Number of measurements
        n: Signal length
        s: Sparsity of x_true, 0 < s <= n
        nf: Noise factor
        seed: Generator seed
        density: Fraction of nonzeros in A; 1 gives a dense Gaussian matrix

    Returns:
        CsInstance with unit-norm columns of A
    """
    if m < 1 or n < 1:
        raise ValueError(f"m and n must be at least 1, got m={m}, n={n}")
    if not 0 < s <= n:
        raise ValueError(f"Sparsity s must satisfy 0 < s <= n, got s={s}, n={n}")
    if not 0 < density <= 1:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    if nf < 0:
        raise ValueError(f"Noise factor must be nonnegative, got {nf}")

    rng = make_rng(seed)
    if density >= 1:
        A = rng.standard_normal((m, n))
    else:
        A = _sparse_gaussian(rng, m, n, density)
    A = _normalize_columns(A)

    x_true = _sparse_vector(rng, n, s)
    noise = rng.standard_normal(m)
    b = matvec(A, x_true) + nf * noise
    return CsInstance(A=A, b=b, x_true=x_true, s=s, nf=nf, seed=seed, density=density)


def gen_classification(
    m: int,
    n: int,
    s: int,
    seed: int = 0,
    kind: Union[str, ProblemKind] = ProblemKind.SQUARED_HINGE_SVM,
) -> Tuple[DatasetTable, np.ndarray]:
    """
    Synthetic binary classification data with an s-sparse ground truth.

    Labels are sgn<a_i, x_true> (zero counts as +1) for the SVM and
    Bernoulli(sigmoid(<a_i, x_true>)) for logistic regression. Either way
    the table stores them as -1/+1.
    """
    kind = ProblemKind(kind)
    if kind is ProblemKind.LEAST_SQUARES:
        raise ValueError("gen_classification builds SVM or logistic data, use gen_cs for least squares")
    if m < 1 or n < 1 or not 0 < s <= n:
        raise ValueError(f"Need m, n >= 1 and 0 < s <= n, got m={m}, n={n}, s={s}")

    rng = make_rng(seed)
    A = rng.standard_normal((m, n))
    x_true = _sparse_vector(rng, n, s)
    t = A @ x_true
    if kind is ProblemKind.SQUARED_HINGE_SVM:
        labels = np.where(t >= 0, 1.0, -1.0)
    else:
        labels = np.where(rng.random(m) < expit(t), 1.0, -1.0)
    table = DatasetTable(samples=sp.csr_matrix(A), labels=labels, name=f"synthetic_{kind.value}_{seed}")
    return table, x_true


def table_problem(
    table: DatasetTable,
    kind: Union[str, ProblemKind],
    ridge: float,
    dense_threshold: int = 500,
) -> Problem:
    """Problem over a dataset; the logistic model sees labels as {0, 1}."""
    kind = ProblemKind(kind)
    if kind is ProblemKind.LOGISTIC_L2:
        response = table.binary_labels()
    elif kind is ProblemKind.SQUARED_HINGE_SVM:
        response = table.labels
    else:
        raise ValueError("Datasets are solved with the svm or logistic model")
    return Problem(kind, table.samples, response, ridge=ridge, dense_threshold=dense_threshold)


def scale_features(table: DatasetTable) -> DatasetTable:
    """
    Divide each feature column by its largest magnitude; all-zero columns stay as they are.

    Returns:
        New DatasetTable with scaled=True and entries in [-1, 1]
    """
    samples = sp.csc_matrix(table.samples, dtype=float, copy=True)
    maxabs = np.asarray(abs(samples).max(axis=0).todense()).ravel()
    maxabs[maxabs == 0] = 1.0
    samples.data /= np.repeat(maxabs, np.diff(samples.indptr))
    return DatasetTable(samples=samples.tocsr(), labels=table.labels.copy(), scaled=True, name=table.name)


def _lookup_cs_constant(q: float) -> float:
    for key, value in CS_LAMBDA_CONSTANTS.items():
        if np.isclose(q, key):
            return value
    raise ValueError(f"No default lambda constant for q={q}; pass a explicitly")


def lambda_rule_cs(A: Matrix, b: np.ndarray, q: float, a: Optional[float] = None) -> float:
    """
    lambda = a * ||A^T b||_inf with a = 0.02, 0.03, 0.04 for q = 0, 1/2, 2/3.

    Args:
        A: Measurement matrix
        b: Observations
        q: Exponent
        a: Constant to use instead of the defaults (required for other q)
    """
    a = _lookup_cs_constant(q) if a is None else float(a)
    if not a > 0:
        raise ValueError(f"lambda constant a must be positive, got {a}")
    scale = float(np.max(np.abs(rmatvec(A, np.asarray(b, dtype=float)))))
    if scale == 0:
        raise ValueError("A^T b is zero (b = 0?): the lambda rule gives lambda = 0")
    return a * scale


def lambda_rule_svm(table: DatasetTable) -> Tuple[float, float]:
    """
    lambda = (3e-4 * log2(n / m) / m) * ||sum_i y_i a_i||_inf and mu = lambda.

    Raises:
        ValueError: when the rule does not give a positive lambda (n <= m)
    """
    m, n = table.shape
    correlation = float(np.max(np.abs(rmatvec(table.samples, table.labels)), initial=0.0))
    lam = SVM_LAMBDA_FACTOR * np.log2(n / m) / m * correlation
    if not lam > 0:
        raise ValueError(
            f"SVM lambda rule gives lambda={lam:.3g} for m={m}, n={n}; pass --lambda explicitly"
        )
    return float(lam), float(lam)


def svm_grad_tol(m: int, n: int) -> float:
    return float(np.log2(m * n) * 1e-5)


def metrics(
    x: np.ndarray,
    report: SolveReport,
    target: Union[CsInstance, DatasetTable],
    algo: Optional[str] = None,
) -> MetricRow:
    """
    Score a solution against a CS ground truth (relative error) or a dataset (accuracy).

    Accuracy is the fraction of samples with y_i * <a_i, x> > 0; a zero margin
    counts as a miss.
    """
    x = np.asarray(x, dtype=float).ravel()
    re_err = acc = None
    if isinstance(target, CsInstance):
        norm = float(np.linalg.norm(target.x_true))
        if norm == 0:
            raise ValueError("Relative error is undefined for x_true = 0")
        re_err = float(np.linalg.norm(x - target.x_true)) / norm
    elif isinstance(target, DatasetTable):
        if target.shape[1] != x.shape[0]:
            raise ValueError(f"Solution has {x.shape[0]} entries but the table has {target.shape[1]} features")
        margins = target.labels * matvec(target.samples, x)
        acc = float(np.mean(margins > 0))
    else:
        raise TypeError(f"Cannot score against {type(target).__name__}")

    return MetricRow(
        algo=algo or report.algorithm,
        q=report.q,
        f_value=report.f_value,
        re_err=re_err,
        acc=acc,
        support_size=int(np.count_nonzero(x)),
        time_seconds=report.time_seconds,
        iterations=report.iterations,
        status=report.status.value,
    )


def run_algorithm(problem: Problem, algo: str, opts: SolveOptions) -> SolveReport:
    """Run `psnp` or `proxgrad` on a problem."""
    if algo == "psnp":
        return psnp(problem, opts)
    if algo == "proxgrad":
        return prox_grad(problem, opts)
    raise ValueError(f"Unknown algorithm '{algo}', expected one of {', '.join(ALGORITHMS)}")


def _solver_options(q: float, lam: float, grad_tol: float, solver_settings: Optional[Dict]) -> SolveOptions:
    settings = dict(solver_settings or {})
    return SolveOptions(q=q, lam=lam, grad_tol=grad_tol, **settings)


def aggregate_median(rows: List[MetricRow]) -> List[MetricRow]:
    """
    Median of every numeric column per (algo, q) cell; status is the most frequent one.
    """
    if not rows:
        return []
    frame = pd.DataFrame([asdict(row) for row in rows])
    numeric_columns = ["f_value", "re_err", "acc", "support_size", "time_seconds", "iterations"]
    frame[numeric_columns] = frame[numeric_columns].astype(float)
    grouped = frame.groupby(["algo", "q"], sort=False)
    numeric = grouped[numeric_columns].median()
    status = grouped["status"].agg(lambda values: values.mode().iloc[0])

    aggregated = []
    for (algo, q), values in numeric.iterrows():
        aggregated.append(MetricRow(
            algo=algo,
            q=float(q),
            f_value=float(values["f_value"]),
            re_err=None if pd.isna(values["re_err"]) else float(values["re_err"]),
            acc=None if pd.isna(values["acc"]) else float(values["acc"]),
            support_size=float(values["support_size"]),
            time_seconds=float(values["time_seconds"]),
            iterations=float(values["iterations"]),
            status=str(status.loc[(algo, q)]),
        ))
    return aggregated


def bench_cs(
    m: int = 200,
    n: int = 800,
    s: int = 20,
    nf: float = 0.0,
    q_values: Sequence[float] = DEFAULT_Q_VALUES,
    algos: Sequence[str] = ALGORITHMS,
    trials: int = 20,
    seed: int = 0,
    density: float = 1.0,
    sweep: Optional[str] = None,
    values: Optional[Sequence[float]] = None,
    lambda_a: Optional[float] = None,
    lam: Optional[float] = None,
    grad_tol: float = 1e-6,
    threads: int = 1,
    solver_settings: Optional[Dict] = None,
) -> List[MetricRow]:
    """
    Compressed-sensing benchmark: median metrics over seeded trials.

    Trial t uses seed + t, so every algorithm and q sees the same instances.
    With sweep set to one of m, s, nf the cell is repeated for each entry of
    values and the algo column reads `<algo>@<param>=<value>`.

    Args:
        m, n, s, nf, density: Instance parameters (see gen_cs)
        q_values: Exponents to run
        algos: Subset of ("psnp", "proxgrad")
        trials: Trials per cell
        seed: Seed of the first trial
        sweep: Parameter to vary, or None for a single cell
        values: Values of the swept parameter
        lambda_a: Override of the lambda constant a
        lam: Fixed lambda for every q instead of the lambda rule
        grad_tol: Solver stopping tolerance
        threads: Worker threads for the trials
        solver_settings: Extra SolveOptions fields (sigma, gamma, max_iter, ...)

    Returns:
        One aggregated MetricRow per (cell, algorithm, q)
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    for algo in algos:
        if algo not in ALGORITHMS:
            raise ValueError(f"Unknown algorithm '{algo}'")
    if sweep is None:
        cells = [(None, None)]
    else:
        if sweep not in SWEEP_PARAMS:
            raise ValueError(f"Cannot sweep '{sweep}', expected one of {', '.join(SWEEP_PARAMS)}")
        if not values:
            raise ValueError(f"Sweep over {sweep} needs at least one value")
        cells = [(sweep, value) for value in values]

    dense_threshold = (solver_settings or {}).get("dense_threshold", 500)
    rows: List[MetricRow] = []
    for param, value in cells:
        params = {"m": m, "s": s, "nf": nf}
        suffix = ""
        if param is not None:
            params[param] = float(value) if param == "nf" else int(value)
            suffix = f"@{param}={value:g}"
        logger.info(
            f"CS cell m={params['m']} n={n} s={params['s']} nf={params['nf']:g}: {trials} trials"
        )

        def run_trial(trial_seed: int) -> List[MetricRow]:
            instance = gen_cs(params["m"], n, params["s"], params["nf"], trial_seed, density)
            problem = instance.problem(dense_threshold)
            results = []
            for q in q_values:
                lam_q = lam if lam is not None else lambda_rule_cs(instance.A, instance.b, q, lambda_a)
                for algo in algos:
                    opts = _solver_options(q, lam_q, grad_tol, solver_settings)
                    report = run_algorithm(problem, algo, opts)
                    results.append(metrics(report.x_final, report, instance, algo=f"{algo}{suffix}"))
            return results

        seeds = [seed + t for t in range(trials)]
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            per_trial = list(pool.map(run_trial, seeds))
        rows.extend(aggregate_median([row for trial_rows in per_trial for row in trial_rows]))
    return rows


def bench_svm(
    tables: Sequence[DatasetTable],
    q_values: Sequence[float] = DEFAULT_Q_VALUES,
    algos: Sequence[str] = ALGORITHMS,
    lam: Optional[float] = None,
    grad_tol: Optional[float] = None,
    solver_settings: Optional[Dict] = None,
    mu: Optional[float] = None,
) -> List[MetricRow]:
    """
    SVM benchmark: each algorithm at each q on every dataset.

    Tables are scaled first if they are not already. lambda and mu follow
    lambda_rule_svm unless lam is given (then mu = lam); an explicit mu wins
    over both. The algo column reads `<algo>@<dataset name>`.
    """
    rows: List[MetricRow] = []
    dense_threshold = (solver_settings or {}).get("dense_threshold", 500)
    for table in tables:
        if not table.scaled:
            table = scale_features(table)
        logger.info(f"Dataset summary: {summarize_table(table)}")
        m, n = table.shape
        lam_t, mu_t = (float(lam), float(lam)) if lam is not None else lambda_rule_svm(table)
        mu_t = mu_t if mu is None else float(mu)
        tol = svm_grad_tol(m, n) if grad_tol is None else grad_tol
        problem = table_problem(table, ProblemKind.SQUARED_HINGE_SVM, mu_t, dense_threshold)
        for q in q_values:
            for algo in algos:
                report = run_algorithm(problem, algo, _solver_options(q, lam_t, tol, solver_settings))
                label = f"{algo}@{table.name}" if table.name else algo
                rows.append(metrics(report.x_final, report, table, algo=label))
    return rows


def _ensure_parent(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def metrics_frame(rows: Sequence[MetricRow]) -> pd.DataFrame:
    """MetricRows as a DataFrame with the CSV column names."""
    records = [
        {
            "algo": row.algo,
            "q": row.q,
            "f": row.f_value,
            "re_err": row.re_err,
            "acc": row.acc,
            "nnz": row.support_size,
            "time": row.time_seconds,
            "iters": row.iterations,
            "status": row.status,
        }
        for row in rows
    ]
    return pd.DataFrame(records, columns=CSV_COLUMNS)


def write_metrics_csv(rows: Sequence[MetricRow], path: str) -> str:
    """Write rows with floats at 6 significant digits; missing metrics are empty cells."""
    _ensure_parent(path)
    metrics_frame(rows).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info(f"Saved {len(rows)} result rows to {path}")
    return path


def read_metrics_csv(path: str) -> List[MetricRow]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"File not found: {path}")
    frame = pd.read_csv(path, dtype={"algo": str, "status": str}, float_precision="round_trip")
    missing = [column for column in CSV_COLUMNS if column not in frame.columns]
    if missing:
        raise ValueError(f"{path} is missing columns: {', '.join(missing)}")

    def optional(value) -> Optional[float]:
        return None if pd.isna(value) else float(value)

    return [
        MetricRow(
            algo=record["algo"],
            q=float(record["q"]),
            f_value=float(record["f"]),
            re_err=optional(record["re_err"]),
            acc=optional(record["acc"]),
            support_size=float(record["nnz"]),
            time_seconds=float(record["time"]),
            iterations=float(record["iters"]),
            status=record["status"],
        )
        for record in frame.to_dict(orient="records")
    ]


def write_trace(report: SolveReport, path: str) -> str:
    """One CSV line per iteration record: k,F,grad_inf,supp,alpha,beta,newton."""
    _ensure_parent(path)
    frame = pd.DataFrame(
        [
            {
                "k": record.k,
                "F": record.objective,
                "grad_inf": record.grad_inf,
                "supp": record.support_size,
                "alpha": record.alpha,
                "beta": record.beta,
                "newton": int(record.newton_accepted),
            }
            for record in report.trace
        ],
        columns=TRACE_COLUMNS,
    )
    frame.to_csv(path, index=False, float_format="%.12g")
    logger.info(f"Saved {len(report.trace)} trace records to {path}")
    return path

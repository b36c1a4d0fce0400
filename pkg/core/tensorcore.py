"""
Dense float64 kernel shared by every app.

A DenseMatrix is a 2-D float64 numpy array (row-major); a ParamVec is a 1-D
float64 numpy array. Products go through np.einsum without path optimisation,
which keeps numpy's own fixed accumulation loops instead of a threaded BLAS, so
results do not depend on the BLAS build or thread count.
"""
import numpy as np

from .exceptions import ContractViolation, require


def as_matrix(values, cols=None):
    """Copy values into a float64 DenseMatrix, reshaping a flat input when cols is given."""
    data = np.array(values, dtype=np.float64)
    if cols is not None:
        require(data.size % cols == 0, f"{data.size} values do not fill rows of {cols}")
        data = data.reshape(-1, cols)
    require(data.ndim == 2, f"expected a 2-D matrix, got shape {data.shape}")
    return data


def as_param_vec(values):
    vec = np.array(values, dtype=np.float64).reshape(-1)
    return vec


def require_same_length(*vectors, what='parameter vectors'):
    lengths = {len(v) for v in vectors}
    if len(lengths) > 1:
        raise ContractViolation(f"{what} differ in length: {sorted(lengths)}")


def matmul(a, b):
    """Matrix product with a fixed row-major accumulation order."""
    require(a.ndim == 2 and b.ndim == 2, 'matmul needs 2-D operands')
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return np.einsum('ij,jk->ik', a, b, optimize=False)


def softmax_rows(z):
    """Row-wise softmax, shifted by the row max so large logits stay finite."""
    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def log_softmax_rows(z):
    """Row-wise log-softmax."""
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def check_labels(labels, rows, classes):
    labels = np.asarray(labels, dtype=np.int64)
    if rows == 0 or labels.size == 0:
        raise ContractViolation('cross-entropy needs a nonempty batch')
    require(labels.shape == (rows,), f"{labels.size} labels for {rows} rows")
    if labels.min() < 0 or labels.max() >= classes:
        raise ContractViolation(f"labels must lie in [0, {classes})")
    return labels


def cross_entropy(logits, labels):
    """Mean over rows of -log softmax(logits)[label]."""
    labels = check_labels(labels, logits.shape[0], logits.shape[1])
    picked = log_softmax_rows(logits)[np.arange(len(labels)), labels]
    return float(-picked.sum() / len(labels))


def sq_norm(vec):
    """Squared Euclidean norm as a float."""
    return float(np.dot(vec, vec))


def all_finite(*arrays):
    return all(np.isfinite(a).all() for a in arrays)

"""Shared fixtures: small assembled systems reused across test modules."""

import numpy as np
import pytest

from hpss import KernelSpec, assemble, assemble_dense, build_cluster_tree, discretize_strip


def dense_from_operator(apply, n):
    """Densify a linear operator by applying it to the identity columns."""
    cols = []
    for j in range(n):
        e = np.zeros(n, dtype=np.complex128)
        e[j] = 1.0
        cols.append(apply(e))
    return np.column_stack(cols)


@pytest.fixture(scope="session")
def strip_system():
    """4-wavelength strip, N = 128, depth-2 tree, with its dense oracle.

    Session-scoped because assembly is the slow part and every consumer
    treats the objects as read-only.
    """
    mesh = discretize_strip(4.0, 32)
    spec = KernelSpec.for_mesh(mesh)
    tree = build_cluster_tree(mesh, 32)
    h = assemble(spec, tree, tol=1e-3)
    z_mesh = assemble_dense(spec)
    z_perm = assemble_dense(spec, permutation=tree.permutation)
    return {"mesh": mesh, "spec": spec, "tree": tree, "h": h, "z_mesh": z_mesh, "z_perm": z_perm}

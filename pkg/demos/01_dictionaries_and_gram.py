"""
Observable dictionaries and Gram matrices
=========================================

A dictionary is an ordered set of scalar observables that spans the
finite-dimensional subspace everything else works in.  Monomial
dictionaries are enumerated in graded-lexicographic order with the
constant function first.
"""

import numpy as np

from koopest import (
    Domain,
    MonomialSpec,
    closed_quadratic_dictionary,
    evaluate,
    gram,
    make_monomial_dictionary,
    unit_box,
)

# All monomials of total degree <= 2 on a 2-D state: six observables.
spec = MonomialSpec(state_dim=2, max_degree=2)
dct = make_monomial_dictionary(spec)
print("degree-2 monomial dictionary:", dct.names)
print("evaluated at (1, 2):        ", evaluate(dct, np.array([1.0, 2.0])))

# The closed quadratic benchmark uses a hand-picked subset of four.
bench = closed_quadratic_dictionary()
print("\nbenchmark dictionary:        ", bench.names)

# Inner products use the uniform probability measure on a box domain.
# Monomial dictionaries get exact analytic moments; anything else falls
# back to tensor-product Gauss-Legendre quadrature.
lam = gram(dct, unit_box(2))
print(f"\ngram matrix ({lam.method}), condition number {lam.cond:.2f}:")
print(np.array_str(lam.matrix, precision=4, suppress_small=True))

# Both paths agree to roundoff for monomials (order >= degree + 1).
lam_q = gram(dct, unit_box(2), quadrature_order=4, method="quadrature")
print("\nmax |analytic - quadrature|:", np.abs(lam.matrix - lam_q.matrix).max())

# Rescaling the domain rescales the moments.
wide = gram(dct, Domain([-2.0, -2.0], [2.0, 2.0]))
print("E[x1^2] on [-1,1]^2 vs [-2,2]^2:", lam.matrix[1, 1], "vs", wide.matrix[1, 1])

"""slicefuzz: coverage-guided greybox fuzzing with a slice-and-solve assist.

When a fuzzing campaign plateaus, slicefuzz picks an uncovered branch arm
that some seed already reaches, slices the source statements that feed that
branch out of the execution trace, and asks a solver backend to rewrite the
seed so the uncovered arm is taken. Accepted rewrites land in the shared
seed corpus and the greybox loop carries on from there.
"""

__version__ = "0.1.0"

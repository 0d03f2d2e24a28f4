"""utils — Shared numerical helpers (linear algebra, fitting, winding, quadrature, pools)."""

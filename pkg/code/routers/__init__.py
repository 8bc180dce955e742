from .combinatorics import router as combinatorics_router
from .audit import router as audit_router

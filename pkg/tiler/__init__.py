from tiler.errors import InfeasiblePlanError, InfeasibleTilingError, TilingError
from tiler.tiling import (ALL_ORDERS, LOOPS, TilingPlan, TrafficBreakdown, footprint, identity_plan, input_extent,
                          input_extent_sum, needs_tiling, plan_cost, search_geometry, search_tiling, tile_candidates,
                          tile_footprint, traffic)

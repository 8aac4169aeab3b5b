from zoo.baselines import alexnet, mobilenet, squeezenet
from zoo.catalog import CatalogEntry, build_variant, catalog, catalog_entry
from zoo.errors import SpecError, UnknownNetworkError, ZooError
from zoo.squeezenext import BlockPlan, SqueezeNextSpec, build_squeezenext, stage_of

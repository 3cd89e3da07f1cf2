from irg_ldp.infrastructure.parallel import chunk_ranges, map_ordered
from irg_ldp.infrastructure.streams import Stream, StreamFactory

__all__ = ["Stream", "StreamFactory", "chunk_ranges", "map_ordered"]

//! Footprint monitoring for confirmed sites: monthly heatmaps, rolling-median
//! masking, contour tracing, area series and distance to waterways.

mod contours;
mod footprint;
mod series;
mod waterway;

pub use contours::{extract_contours, mask_contours, Contour};
pub use footprint::{area_series, footprints_to_geojson, monitor_site, AreaSeries, FootprintRecord, FootprintSeries, Region};
pub use series::{monthly_heatmaps, rolling_mask, MonthlySeries, FOOTPRINT_THRESHOLD, ROLLING_WINDOW};
pub use waterway::{distance_to_waterway, point_segment_distance, WaterwayDistance, WaterwayFeature, WaterwayKind, WaterwaySet};

//! File formats: traces and chain logs as line-delimited JSON, images as
//! portable graymaps/bitmaps, meshes as Wavefront-style text, proposal
//! indexes as a little-endian binary blob with a text sidecar.

pub mod chainlog;
pub mod images;
pub mod index;
pub mod mesh;
pub mod trace;

pub use chainlog::{read_chain_log, write_chain_log};
pub use images::{
    depth_to_gray, load_observation, read_pbm, read_pgm, write_contour_pbm, write_depth_pgm,
    write_pbm, write_pgm,
};
pub use index::{read_index, write_index};
pub use mesh::{read_obj, write_obj};
pub use trace::{read_trace, write_trace};

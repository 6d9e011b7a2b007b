use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("parse error in {path}: {detail}")]
    ParseError { path: String, detail: String },
    #[error("mesh has no valid triangles")]
    EmptyMesh,
    #[error("degenerate extent: bounding box has zero size")]
    DegenerateExtent,
    #[error("resolution {0} below minimum of 2")]
    ResolutionTooSmall(usize),
    #[error("bad magic in tensor file (expected \"EVK0\")")]
    BadMagic,
    #[error("invalid tensor dims: {0}")]
    DimOverflow(String),
    #[error("non-finite value in tensor data")]
    NonFinite,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

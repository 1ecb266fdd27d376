//! Layered proxy-node video representation.
//!
//! A video is decomposed into semantic layers. Each layer carries a sparse
//! set of tracked proxy nodes with learned texture codes; a shared MLP decodes
//! barycentrically interpolated codes (plus space-time coordinates) into RGB.
//!
//! Pipeline: [`vectorizer`] seeds nodes from masks, [`propagation`] builds full
//! trajectories with a [`tracking`] backend, [`appearance`] fits codes and the
//! decoder, [`renderer`] and [`editing`] consume the fitted [`representation`].

pub mod appearance;
pub mod config;
pub mod editing;
pub mod geometry;
pub mod image;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod propagation;
pub mod renderer;
pub mod representation;
pub mod synth;
pub mod tracking;
pub mod vectorizer;

pub use geometry::{BarycentricCoords, Point2, Triangulation};
pub use image::{FrameSequence, GrayImage, LayerMaskTrack, Mask, RgbImage};
pub use representation::Representation;

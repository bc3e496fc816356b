//! Dictionaries and greedy sparse solvers.

mod dictionary;
mod omp;

pub use dictionary::{
    ae_grid_angle, build_ae_dictionary, build_dft_dictionary, DenseDictionary, DftDictionary, Dictionary, Sign,
};
pub use omp::{mmv_omp, omp, top_k_rows, Measurements, SparseEstimate, StopRule, Termination};

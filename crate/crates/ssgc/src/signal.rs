//! Record loading, segmentation, and frequency-magnitude spectra.

use std::fs;
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

/// Default sampling frequency (Hz) of the public single-channel EEG corpus.
pub const DEFAULT_SAMPLE_RATE: f64 = 173.61;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: cannot parse {text:?} as a number")]
    MalformedLine {
        path: String,
        line: usize,
        text: String,
    },
    #[error("{path}: file contains no samples")]
    Empty { path: String },
    #[error("{path}: line {line}: label {found} differs from label {expected} on earlier rows")]
    InconsistentLabel {
        path: String,
        line: usize,
        expected: i64,
        found: i64,
    },
    #[error("segment length must be >= 2, got {0}")]
    SegmentTooShort(usize),
    #[error("overlap {overlap} must be smaller than segment length {seg_len}")]
    OverlapTooLarge { overlap: usize, seg_len: usize },
}

/// One labeled time-series record as loaded from disk.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub label: usize,
    pub source_id: String,
}

/// A fixed-length window cut from a [`RawRecord`].
#[derive(Debug, Clone)]
pub struct Segment {
    pub samples: Vec<f64>,
    pub label: usize,
    pub source_id: String,
    /// Index of the first element within the parent record.
    pub offset: usize,
}

/// Frequency-magnitude transform of one [`Segment`].
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    pub label: usize,
    pub source_id: String,
    pub offset: usize,
}

/// Load an ASCII record with one decimal sample per line.
///
/// Blank lines are skipped; anything else must parse as a number.
pub fn load_bonn_record(
    path: &Path,
    label: usize,
    sample_rate: f64,
) -> Result<RawRecord, SignalError> {
    let text = fs::read_to_string(path).map_err(|source| SignalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: f64 = trimmed
            .parse()
            .map_err(|_| SignalError::MalformedLine {
                path: path.display().to_string(),
                line: idx + 1,
                text: trimmed.to_string(),
            })?;
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(SignalError::Empty {
            path: path.display().to_string(),
        });
    }
    Ok(RawRecord {
        samples,
        sample_rate,
        label,
        source_id: path.display().to_string(),
    })
}

/// Load a CSV record: one sample per row, first column is the value.
///
/// An optional second column carries the class label; when present it must
/// be the same on every row. `label` is the fallback when the file has no
/// label column.
pub fn load_csv_record(
    path: &Path,
    label: usize,
    sample_rate: f64,
) -> Result<RawRecord, SignalError> {
    let text = fs::read_to_string(path).map_err(|source| SignalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut samples = Vec::new();
    let mut file_label: Option<i64> = None;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut cols = trimmed.split(',');
        let value_text = cols.next().unwrap_or("").trim();
        let value: f64 = value_text
            .parse()
            .map_err(|_| SignalError::MalformedLine {
                path: path.display().to_string(),
                line: idx + 1,
                text: value_text.to_string(),
            })?;
        samples.push(value);
        if let Some(label_text) = cols.next() {
            let parsed: i64 =
                label_text
                    .trim()
                    .parse()
                    .map_err(|_| SignalError::MalformedLine {
                        path: path.display().to_string(),
                        line: idx + 1,
                        text: label_text.trim().to_string(),
                    })?;
            match file_label {
                None => file_label = Some(parsed),
                Some(expected) if expected != parsed => {
                    return Err(SignalError::InconsistentLabel {
                        path: path.display().to_string(),
                        line: idx + 1,
                        expected,
                        found: parsed,
                    })
                }
                Some(_) => {}
            }
        }
    }
    if samples.is_empty() {
        return Err(SignalError::Empty {
            path: path.display().to_string(),
        });
    }
    Ok(RawRecord {
        samples,
        sample_rate,
        label: file_label.map(|l| l as usize).unwrap_or(label),
        source_id: path.display().to_string(),
    })
}

/// Cut a record into consecutive windows of `seg_len` samples at stride
/// `seg_len - overlap`. A trailing window shorter than `seg_len` is
/// discarded. Returns an empty list when the record is shorter than one
/// segment.
pub fn segment(
    record: &RawRecord,
    seg_len: usize,
    overlap: usize,
) -> Result<Vec<Segment>, SignalError> {
    if seg_len < 2 {
        return Err(SignalError::SegmentTooShort(seg_len));
    }
    if overlap >= seg_len {
        return Err(SignalError::OverlapTooLarge { overlap, seg_len });
    }
    let stride = seg_len - overlap;
    let mut segments = Vec::new();
    let mut offset = 0;
    while offset + seg_len <= record.samples.len() {
        segments.push(Segment {
            samples: record.samples[offset..offset + seg_len].to_vec(),
            label: record.label,
            source_id: record.source_id.clone(),
            offset,
        });
        offset += stride;
    }
    Ok(segments)
}

/// Discrete-Fourier magnitude spectrum of a segment.
///
/// `magnitudes[m] = |sum_i samples[i] * exp(-j*2*pi*i*m/n)|` with 0-based
/// indices, length preserved. When `half_spectrum` is set only the first
/// `n/2` bins are kept.
pub fn to_spectrum(seg: &Segment, half_spectrum: bool) -> Spectrum {
    let magnitudes = dft_magnitudes(&seg.samples);
    let magnitudes = if half_spectrum {
        magnitudes[..seg.samples.len() / 2].to_vec()
    } else {
        magnitudes
    };
    Spectrum {
        magnitudes,
        label: seg.label,
        source_id: seg.source_id.clone(),
        offset: seg.offset,
    }
}

fn dft_magnitudes(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().map(|c| c.norm()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand::Rng as _;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn temp_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn seg(samples: Vec<f64>) -> Segment {
        Segment {
            samples,
            label: 0,
            source_id: "test".into(),
            offset: 0,
        }
    }

    #[test]
    fn bonn_loader_parses_lines_in_order() {
        let f = temp_file("1\n2\n3\n");
        let rec = load_bonn_record(f.path(), 1, DEFAULT_SAMPLE_RATE).unwrap();
        assert_eq!(rec.samples, vec![1.0, 2.0, 3.0]);
        assert_eq!(rec.label, 1);
        assert_eq!(rec.sample_rate, DEFAULT_SAMPLE_RATE);
    }

    #[test]
    fn bonn_loader_reports_malformed_line_number() {
        let f = temp_file("1\n2\n3\n4\nabc\n6\n");
        let err = load_bonn_record(f.path(), 0, DEFAULT_SAMPLE_RATE).unwrap_err();
        match err {
            SignalError::MalformedLine { line, ref text, .. } => {
                assert_eq!(line, 5);
                assert_eq!(text, "abc");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn bonn_loader_rejects_empty_file() {
        let f = temp_file("\n\n");
        assert!(matches!(
            load_bonn_record(f.path(), 0, DEFAULT_SAMPLE_RATE),
            Err(SignalError::Empty { .. })
        ));
    }

    #[test]
    fn csv_loader_reads_value_and_label_columns() {
        let f = temp_file("0.5,1\n-2.5,1\n3.0,1\n");
        let rec = load_csv_record(f.path(), 0, 200.0).unwrap();
        assert_eq!(rec.samples, vec![0.5, -2.5, 3.0]);
        assert_eq!(rec.label, 1);
    }

    #[test]
    fn csv_loader_rejects_mixed_labels() {
        let f = temp_file("0.5,1\n1.5,0\n");
        assert!(matches!(
            load_csv_record(f.path(), 0, 200.0),
            Err(SignalError::InconsistentLabel { line: 2, .. })
        ));
    }

    #[test]
    fn segment_counts_match_integer_arithmetic() {
        // floor(4097/256) = 16 full windows, 1 trailing sample dropped.
        let rec = RawRecord {
            samples: vec![0.0; 4097],
            sample_rate: DEFAULT_SAMPLE_RATE,
            label: 0,
            source_id: "r".into(),
        };
        let segs = segment(&rec, 256, 0).unwrap();
        assert_eq!(segs.len(), 16);
        assert_eq!(segs.last().unwrap().offset, 15 * 256);
    }

    #[test]
    fn segment_tiles_exactly_when_lengths_divide() {
        let rec = RawRecord {
            samples: (0..6).map(|i| i as f64).collect(),
            sample_rate: 1.0,
            label: 3,
            source_id: "r".into(),
        };
        let segs = segment(&rec, 3, 0).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].offset, 0);
        assert_eq!(segs[1].offset, 3);
        assert_eq!(segs[1].samples, vec![3.0, 4.0, 5.0]);
        assert!(segs.iter().all(|s| s.label == 3));
    }

    #[test]
    fn segment_with_overlap_drops_partial_tail() {
        // 5 samples, seg_len 3, overlap 1: offsets 0 and 2; offset 4 would
        // run past the end and is discarded.
        let rec = RawRecord {
            samples: vec![1.0; 5],
            sample_rate: 1.0,
            label: 0,
            source_id: "r".into(),
        };
        let offsets: Vec<usize> = segment(&rec, 3, 1)
            .unwrap()
            .iter()
            .map(|s| s.offset)
            .collect();
        assert_eq!(offsets, oracle::segment_offsets(5, 3, 1));
        assert_eq!(offsets, vec![0, 2]);
    }

    #[test]
    fn segment_shorter_record_yields_empty() {
        let rec = RawRecord {
            samples: vec![1.0, 2.0],
            sample_rate: 1.0,
            label: 0,
            source_id: "r".into(),
        };
        assert!(segment(&rec, 3, 0).unwrap().is_empty());
    }

    #[test]
    fn spectrum_of_zero_segment_is_zero() {
        let sp = to_spectrum(&seg(vec![0.0; 16]), false);
        assert!(sp.magnitudes.iter().all(|&m| m == 0.0));
        assert_eq!(sp.magnitudes.len(), 16);
    }

    #[test]
    fn spectrum_of_unit_impulse_is_flat() {
        let mut samples = vec![0.0; 8];
        samples[0] = 1.0;
        let sp = to_spectrum(&seg(samples), false);
        for &m in &sp.magnitudes {
            assert_relative_eq!(m, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn spectrum_matches_naive_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [8usize, 33, 64, 128] {
            let samples: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let got = to_spectrum(&seg(samples.clone()), false).magnitudes;
            let want = oracle::dft_magnitudes_naive(&samples);
            for (g, w) in got.iter().zip(&want) {
                assert_relative_eq!(g, w, max_relative = 1e-9, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn spectrum_invariant_under_circular_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = to_spectrum(&seg(samples.clone()), false).magnitudes;
        for shift in [1usize, 7, 31] {
            let mut rotated = samples.clone();
            rotated.rotate_left(shift);
            let m = to_spectrum(&seg(rotated), false).magnitudes;
            for (a, b) in m.iter().zip(&base) {
                assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn half_spectrum_keeps_first_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let full = to_spectrum(&seg(samples.clone()), false);
        let half = to_spectrum(&seg(samples), true);
        assert_eq!(half.magnitudes.len(), 16);
        assert_eq!(&full.magnitudes[..16], half.magnitudes.as_slice());
    }

    proptest! {
        // Concatenating overlap-free segments reproduces the record prefix.
        #[test]
        fn segmentation_is_lossless_up_to_tail(
            len in 2usize..200,
            seg_len in 2usize..32,
        ) {
            let rec = RawRecord {
                samples: (0..len).map(|i| i as f64 * 0.25).collect(),
                sample_rate: 1.0,
                label: 0,
                source_id: "p".into(),
            };
            let segs = segment(&rec, seg_len, 0).unwrap();
            let joined: Vec<f64> = segs.iter().flat_map(|s| s.samples.clone()).collect();
            prop_assert_eq!(&joined[..], &rec.samples[..joined.len()]);
            prop_assert_eq!(joined.len(), (len / seg_len) * seg_len);
        }

        // Scaling the segment scales every magnitude by the same factor.
        #[test]
        fn spectrum_scales_linearly(
            scale in 0.1f64..10.0,
            values in proptest::collection::vec(-5.0f64..5.0, 4..40),
        ) {
            let base = to_spectrum(&seg(values.clone()), false).magnitudes;
            let scaled_samples: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let scaled = to_spectrum(&seg(scaled_samples), false).magnitudes;
            for (b, s) in base.iter().zip(&scaled) {
                prop_assert!((s - b * scale).abs() <= 1e-12 * (b * scale).abs().max(1e-12));
            }
        }
    }
}

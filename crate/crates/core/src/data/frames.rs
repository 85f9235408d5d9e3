use std::fs;
use std::path::{Path, PathBuf};

use super::pnm::read_image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_tensor_file, write_tensor_file, Tensor};

/// Chronologically ordered frames sharing one H×W×C shape.
///
/// `scale` is the raw value that maps to 1.0; it is 1 once the sequence has
/// been preprocessed.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence<T> {
    frames: Vec<Tensor<T>>,
    height: usize,
    width: usize,
    channels: usize,
    pub scale: f64,
    pub labels: Option<Vec<String>>,
}

impl<T: Scalar> FrameSequence<T> {
    pub fn new(frames: Vec<Tensor<T>>, scale: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("a frame sequence needs at least one frame"))?;
        let dims = first.dims().to_vec();
        if dims.len() != 3 {
            return Err(Error::shape(format!("frames must be H×W×C, got {dims:?}")));
        }
        if let Some(i) = frames.iter().position(|f| f.dims() != dims.as_slice()) {
            return Err(Error::shape(format!(
                "frame {i} has dims {:?}, frame 0 has {dims:?}",
                frames[i].dims()
            )));
        }
        Ok(FrameSequence {
            height: dims[0],
            width: dims[1],
            channels: dims[2],
            frames,
            scale,
            labels: None,
        })
    }

    pub fn frames(&self) -> &[Tensor<T>] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Tensor<T> {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// The last `n` frames as a new sequence.
    pub fn tail(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!(
                "cannot take {n} trailing frames of {}",
                self.len()
            )));
        }
        let mut s = FrameSequence::new(self.frames[self.len() - n..].to_vec(), self.scale)?;
        s.labels = self.labels.as_ref().map(|l| l[l.len() - n..].to_vec());
        Ok(s)
    }

    /// All frames stacked into one N×H×W×C tensor.
    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::stack(&self.frames).expect("frames share dims")
    }

    pub fn from_tensor(t: &Tensor<T>, scale: f64) -> Result<Self> {
        if t.rank() != 4 {
            return Err(Error::shape(format!(
                "sequence tensors are N×H×W×C, got {:?}",
                t.dims()
            )));
        }
        FrameSequence::new(
            (0..t.dims()[0])
                .map(|i| t.outer(i))
                .collect::<Result<_>>()?,
            scale,
        )
    }
}

/// Reads a manifest: UTF-8, one image path per line (relative paths resolve
/// against the manifest's directory), blank lines ignored, order is
/// chronology.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let entries: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| base.join(l))
        .collect();
    if entries.is_empty() {
        return Err(Error::Image {
            path: path.to_path_buf(),
            reason: "manifest lists no frames".into(),
        });
    }
    Ok(entries)
}

/// Loads every frame listed in the manifest, keeping raw sample values and
/// all channels.
pub fn ingest_frames<T: Scalar>(manifest: &Path) -> Result<FrameSequence<T>> {
    let paths = read_manifest(manifest)?;
    let mut frames = Vec::with_capacity(paths.len());
    let mut reference: Option<(usize, usize, usize, u16)> = None;
    for p in &paths {
        let img = read_image(p)?;
        let shape = (img.height, img.width, img.channels, img.max_value);
        match reference {
            None => reference = Some(shape),
            Some(r) if r != shape => {
                return Err(Error::Image {
                    path: p.clone(),
                    reason: format!(
                        "{}x{}x{} (maxval {}) differs from the first frame's {}x{}x{} (maxval {})",
                        shape.0, shape.1, shape.2, shape.3, r.0, r.1, r.2, r.3
                    ),
                })
            }
            _ => {}
        }
        let data = img.samples.iter().map(|&v| T::from_f64(v as f64)).collect();
        frames.push(Tensor::from_vec(
            &[img.height, img.width, img.channels],
            data,
        )?);
    }
    let scale = reference.expect("at least one frame").3 as f64;
    let mut seq = FrameSequence::new(frames, scale)?;
    seq.labels = Some(
        paths
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect(),
    );
    Ok(seq)
}

/// Grayscale (unweighted channel mean), bilinear resize to
/// `target`×`target`, then division by the sequence scale. Every output
/// value lies in [0, 1].
pub fn preprocess<T: Scalar>(seq: &FrameSequence<T>, target: usize) -> Result<FrameSequence<T>> {
    if target == 0 {
        return Err(Error::invalid("target resolution must be positive"));
    }
    if !(seq.scale > 0.0) {
        return Err(Error::invalid(format!(
            "sequence scale {} must be positive",
            seq.scale
        )));
    }
    let (h, w, c) = (seq.height, seq.width, seq.channels);
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            let gray: Vec<f64> = f
                .data()
                .chunks_exact(c)
                .map(|px| px.iter().map(|v| v.as_f64()).sum::<f64>() / c as f64)
                .collect();
            let resized = resize_bilinear(&gray, h, w, target, target);
            let data = resized
                .into_iter()
                .map(|v| T::from_f64((v / seq.scale).clamp(0.0, 1.0)))
                .collect();
            Tensor::from_vec(&[target, target, 1], data)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = FrameSequence::new(frames, 1.0)?;
    out.labels = seq.labels.clone();
    Ok(out)
}

/// Half-pixel-centred bilinear resampling with edge clamping.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    if (h, w) == (oh, ow) {
        return src.to_vec();
    }
    let coord = |o: usize, n_in: usize, n_out: usize| {
        let x = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = x.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f64)
    };
    let cols: Vec<_> = (0..ow).map(|x| coord(x, w, ow)).collect();
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let (y0, y1, ty) = coord(y, h, oh);
        for &(x0, x1, tx) in &cols {
            let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
            let top = lerp(src[y0 * w + x0], src[y0 * w + x1], tx);
            let bottom = lerp(src[y1 * w + x0], src[y1 * w + x1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}

/// Writes the frames as one N×H×W×C "FCT1" tensor. Labels and scale are not
/// stored; sequences read back have scale 1.
pub fn write_sequence<T: Scalar>(seq: &FrameSequence<T>, path: &Path) -> Result<()> {
    write_tensor_file(&seq.to_tensor(), path)
}

pub fn read_sequence<T: Scalar>(path: &Path) -> Result<FrameSequence<T>> {
    let t = read_tensor_file(path)?;
    FrameSequence::from_tensor(&t, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(values: &[f64], h: usize, w: usize, c: usize, scale: f64) -> FrameSequence<f32> {
        let f = Tensor::from_vec(&[h, w, c], values.iter().map(|&v| v as f32).collect()).unwrap();
        FrameSequence::new(vec![f], scale).unwrap()
    }

    #[test]
    fn constant_frames_stay_constant() {
        let s = raw(&[100.0; 12], 3, 4, 1, 255.0);
        let p = preprocess(&s, 8).unwrap();
        let v = p.frame(0).data()[0];
        assert!(p.frame(0).data().iter().all(|&x| x == v));
        assert!((v - 100.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn full_scale_maps_to_one() {
        let s = raw(&[255.0; 16], 4, 4, 1, 255.0);
        for target in [64, 128] {
            let p = preprocess(&s, target).unwrap();
            assert_eq!(p.frame(0).dims(), &[target, target, 1]);
            assert!(p.frame(0).data().iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn channel_mean_grayscale() {
        // Two channels (VV, HV style) per pixel.
        let s = raw(&[0.0, 255.0, 255.0, 255.0], 1, 2, 2, 255.0);
        let p = preprocess(&s, 1).unwrap();
        assert_eq!(p.frame(0).dims(), &[1, 1, 1]);
        assert!((p.frame(0).data()[0] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn identity_resize_is_exact() {
        let src: Vec<f64> = (0..12).map(|i| i as f64).collect();
        assert_eq!(resize_bilinear(&src, 3, 4, 3, 4), src);
    }

    #[test]
    fn mismatched_frames_rejected() {
        let a = Tensor::<f32>::zeros(&[2, 2, 1]).unwrap();
        let b = Tensor::<f32>::zeros(&[2, 3, 1]).unwrap();
        assert!(FrameSequence::new(vec![a, b], 1.0).is_err());
        assert!(FrameSequence::<f32>::new(vec![], 1.0).is_err());
    }
}

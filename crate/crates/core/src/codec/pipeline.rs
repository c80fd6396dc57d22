//! Image ⇄ `.s2c` using a model in evaluation mode.
//!
//! The decoder re-derives every `(μ, σ)` from already-decoded data, so the
//! encoder must feed the context model exactly what the decoder will have:
//! both sides build slice values through [`assemble_slice`].

use s2c_tensor::special::round_half_away;
use s2c_tensor::{Tensor, Var};

use super::container::{CompressedObject, Header, VERSION};
use super::tables::{factorized_tables, scale_index, GaussianTables};
use super::{CodingError, RangeDecoder, RangeEncoder};
use crate::config::SIZE_MULTIPLE;
use crate::entropy::SliceParams;
use crate::error::{Result, S2cError};
use crate::model::{crop_output, pad_input, Model};
use crate::params::Ctx;

/// Largest padded side accepted from a header.
const MAX_SIDE: u32 = 1 << 15;

/// Intermediate values of one coding pass, for cross-checking encoder and decoder.
#[derive(Debug, Clone)]
pub struct CodingTrace {
    pub z_hat: Tensor,
    pub y_hat: Tensor,
    /// `(μ, σ)` of every slice in coding order.
    pub slice_params: Vec<(Tensor, Tensor)>,
}

pub struct Encoded {
    pub object: CompressedObject,
    pub trace: CodingTrace,
}

pub struct Decoded {
    /// Reconstruction cropped to the original size (not clamped).
    pub x_hat: Tensor,
    pub trace: CodingTrace,
}

fn positions(mask: Option<&Tensor>, numel: usize) -> Vec<usize> {
    match mask {
        None => (0..numel).collect(),
        Some(m) => (0..numel).filter(|&i| m.data()[i] != 0.0).collect(),
    }
}

/// `δ + μ` on the slice's positions, zero elsewhere.
pub fn assemble_slice(delta: &[f64], params: &SliceParams) -> Tensor {
    let mu = params.mu.value();
    let mut out = Tensor::zeros(mu.shape());
    let dst = out.data_mut();
    for i in positions(params.mask.as_ref(), mu.numel()) {
        dst[i] = delta[i] + mu.data()[i];
    }
    out
}

fn round_tensor(t: &Tensor) -> Tensor {
    t.map(round_half_away)
}

fn hyper_features(model: &Model, ctx: &Ctx, z_hat: &Tensor) -> Result<Var> {
    model.h_s.forward(ctx, &Var::constant(z_hat.clone()))
}

fn encode_z(model: &Model, z_hat: &Tensor) -> Result<Vec<u8>> {
    let data = z_hat.data();
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = f64::from(i16::MIN)..=f64::from(i16::MAX);
    if !range.contains(&lo) || !range.contains(&hi) {
        return Err(CodingError::InvalidTable(format!("hyper-latent range [{lo}, {hi}] exceeds i16")).into());
    }
    let (lo, hi) = (lo as i64, hi as i64);
    let tables = factorized_tables(&model.prior, &model.params, lo, hi)?;
    let (_, c, h, w) = z_hat.dims4();
    let plane = h * w;
    let mut enc = RangeEncoder::new();
    for (i, &v) in data.iter().enumerate() {
        enc.encode((v as i64 - lo) as usize, &tables[(i / plane) % c])?;
    }
    let mut out = Vec::new();
    out.extend_from_slice(&(lo as i16).to_le_bytes());
    out.extend_from_slice(&(hi as i16).to_le_bytes());
    out.extend(enc.finish());
    Ok(out)
}

fn decode_z(model: &Model, stream: &[u8], shape: [usize; 4]) -> Result<Tensor> {
    if stream.len() < 4 {
        return Err(CodingError::Truncated.into());
    }
    let lo = i64::from(i16::from_le_bytes([stream[0], stream[1]]));
    let hi = i64::from(i16::from_le_bytes([stream[2], stream[3]]));
    let tables = factorized_tables(&model.prior, &model.params, lo, hi)?;
    let [_, c, h, w] = shape;
    let plane = h * w;
    let mut dec = RangeDecoder::new(&stream[4..]);
    let mut out = Tensor::zeros(&shape);
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v = (dec.decode(&tables[(i / plane) % c])? as i64 + lo) as f64;
    }
    dec.finish()?;
    Ok(out)
}

/// Range-code one slice's residuals; returns the stream and the dense residual field.
fn encode_slice(y: &Tensor, params: &SliceParams) -> Result<(Vec<u8>, Vec<f64>)> {
    let (mu, sigma) = (params.mu.value(), params.sigma.value());
    let pos = positions(params.mask.as_ref(), mu.numel());
    let mut delta = vec![0.0; mu.numel()];
    let mut magnitude = 0usize;
    for &i in &pos {
        delta[i] = round_half_away(y.data()[i] - mu.data()[i]);
        if !delta[i].is_finite() {
            return Err(S2cError::InvalidArgument("non-finite latent".into()));
        }
        magnitude = magnitude.max(delta[i].abs() as usize);
    }
    let mut tables = GaussianTables::new(magnitude)?;
    let mut enc = RangeEncoder::new();
    for &i in &pos {
        let sym = (delta[i] as i64 + magnitude as i64) as usize;
        enc.encode(sym, tables.get(scale_index(sigma.data()[i]))?)?;
    }
    let mut out = (magnitude as u16).to_le_bytes().to_vec();
    out.extend(enc.finish());
    Ok((out, delta))
}

fn decode_slice(stream: &[u8], params: &SliceParams) -> Result<Vec<f64>> {
    if stream.len() < 2 {
        return Err(CodingError::Truncated.into());
    }
    let magnitude = usize::from(u16::from_le_bytes([stream[0], stream[1]]));
    let (mu, sigma) = (params.mu.value(), params.sigma.value());
    let mut tables = GaussianTables::new(magnitude)?;
    let mut dec = RangeDecoder::new(&stream[2..]);
    let mut delta = vec![0.0; mu.numel()];
    for i in positions(params.mask.as_ref(), mu.numel()) {
        let sym = dec.decode(tables.get(scale_index(sigma.data()[i]))?)?;
        delta[i] = (sym as i64 - magnitude as i64) as f64;
    }
    dec.finish()?;
    Ok(delta)
}

/// Encode one `[1, 3, H, W]` image with values in `[0, 1]`.
pub fn compress(model: &Model, x: &Tensor, lambda_index: u8) -> Result<Encoded> {
    if x.shape().len() != 4 || x.dims4().0 != 1 || x.dims4().1 != 3 {
        return Err(S2cError::Dimension(format!(
            "compress expects one RGB image [1, 3, H, W], got {:?}",
            x.shape()
        )));
    }
    let (_, _, h, w) = x.dims4();
    let padded = pad_input(x);
    let (_, _, ph, pw) = padded.dims4();
    let ctx = model.params.bind(false);
    let y = model.g_a.forward(&ctx, &Var::constant(padded))?;
    let z = model.h_a.forward(&ctx, &y)?;
    let z_hat = round_tensor(z.value());
    let z_stream = encode_z(model, &z_hat)?;

    let mut cursor = model.cursor(hyper_features(model, &ctx, &z_hat)?)?;
    let mut y_streams = Vec::new();
    let mut slice_params = Vec::new();
    while let Some(slice) = cursor.next_slice().cloned() {
        let params = cursor.params(&ctx, &slice)?;
        let ys = y.value().narrow_channels(slice.channels.start, slice.channels.len());
        let (stream, delta) = encode_slice(&ys, &params)?;
        y_streams.push(stream);
        let values = assemble_slice(&delta, &params);
        slice_params.push((params.mu.value().clone(), params.sigma.value().clone()));
        cursor.submit(&slice, Var::constant(values))?;
    }
    let y_hat = cursor.finish()?.y_hat.value().clone();
    let object = CompressedObject {
        header: Header {
            version: VERSION,
            variant_id: model.config.variant_id(),
            lambda_index,
            orig_height: h as u32,
            orig_width: w as u32,
            padded_height: ph as u32,
            padded_width: pw as u32,
        },
        z_stream,
        y_streams,
    };
    Ok(Encoded {
        object,
        trace: CodingTrace {
            z_hat,
            y_hat,
            slice_params,
        },
    })
}

fn validate_header(model: &Model, h: &Header) -> Result<()> {
    if h.variant_id != model.config.variant_id() {
        return Err(S2cError::Incompatible(format!(
            "stream written by variant id {}, model {:?} has id {}",
            h.variant_id,
            model.config.variant_name,
            model.config.variant_id()
        )));
    }
    let m = SIZE_MULTIPLE as u32;
    let sides_ok = [(h.orig_height, h.padded_height), (h.orig_width, h.padded_width)]
        .iter()
        .all(|&(o, p)| o > 0 && p >= o && p - o < m && p % m == 0 && p <= MAX_SIDE);
    if !sides_ok {
        return Err(S2cError::Data(format!("inconsistent header dimensions {h:?}")));
    }
    Ok(())
}

pub fn decompress(model: &Model, obj: &CompressedObject) -> Result<Decoded> {
    let h = &obj.header;
    validate_header(model, h)?;
    let (ph, pw) = (h.padded_height as usize, h.padded_width as usize);
    let slices = model.context.slices();
    if obj.y_streams.len() != slices.len() {
        return Err(S2cError::Incompatible(format!(
            "{} latent streams, model codes {}",
            obj.y_streams.len(),
            slices.len()
        )));
    }
    let ctx = model.params.bind(false);
    let z_shape = [1, model.config.entropy.hyper_channels, ph / 64, pw / 64];
    let z_hat = decode_z(model, &obj.z_stream, z_shape)?;
    let mut cursor = model.cursor(hyper_features(model, &ctx, &z_hat)?)?;
    let mut slice_params = Vec::new();
    for (slice, stream) in slices.iter().zip(&obj.y_streams) {
        let params = cursor.params(&ctx, slice)?;
        let delta = decode_slice(stream, &params)?;
        let values = assemble_slice(&delta, &params);
        slice_params.push((params.mu.value().clone(), params.sigma.value().clone()));
        cursor.submit(slice, Var::constant(values))?;
    }
    let y_hat = cursor.finish()?.y_hat;
    let x_hat = model.g_s.forward(&ctx, &y_hat)?;
    let x_hat = crop_output(&x_hat, h.orig_height as usize, h.orig_width as usize)?;
    Ok(Decoded {
        x_hat: x_hat.value().clone(),
        trace: CodingTrace {
            z_hat,
            y_hat: y_hat.value().clone(),
            slice_params,
        },
    })
}

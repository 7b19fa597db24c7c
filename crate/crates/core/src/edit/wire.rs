//! Little-endian binary framing shared with remote oracle and embedding services.

use crate::error::OracleError;

/// Size of the fixed `/edit-noise` request header.
pub const EDIT_HEADER_LEN: usize = 28;

/// Body of an `/edit-noise` request.
#[derive(Clone, Debug, PartialEq)]
pub struct EditRequest {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub t: f32,
    pub text_scale: f32,
    pub image_scale: f32,
    pub prompt: String,
    pub noisy: Vec<f32>,
    pub condition: Vec<f32>,
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Header `{width, height, channels: u32, t, s_T, s_I: f32, prompt_len: u32}`,
/// then the UTF-8 prompt, `z_t` and `c_I` as row-major f32.
pub fn encode_edit_request(r: &EditRequest) -> Vec<u8> {
    let mut out = Vec::with_capacity(EDIT_HEADER_LEN + r.prompt.len() + 4 * (r.noisy.len() + r.condition.len()));
    out.extend_from_slice(&r.width.to_le_bytes());
    out.extend_from_slice(&r.height.to_le_bytes());
    out.extend_from_slice(&r.channels.to_le_bytes());
    out.extend_from_slice(&r.t.to_le_bytes());
    out.extend_from_slice(&r.text_scale.to_le_bytes());
    out.extend_from_slice(&r.image_scale.to_le_bytes());
    out.extend_from_slice(&(r.prompt.len() as u32).to_le_bytes());
    out.extend_from_slice(r.prompt.as_bytes());
    put_f32s(&mut out, &r.noisy);
    put_f32s(&mut out, &r.condition);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], OracleError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            OracleError::Malformed(format!("truncated message: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, OracleError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, OracleError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, OracleError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| OracleError::Malformed("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode_edit_request(buf: &[u8]) -> Result<EditRequest, OracleError> {
    let mut r = Reader { buf, pos: 0 };
    let width = r.u32()?;
    let height = r.u32()?;
    let channels = r.u32()?;
    let t = r.f32()?;
    let text_scale = r.f32()?;
    let image_scale = r.f32()?;
    let plen = r.u32()? as usize;
    let prompt = std::str::from_utf8(r.take(plen)?)
        .map_err(|e| OracleError::Malformed(format!("prompt is not UTF-8: {e}")))?
        .to_owned();
    let n = (width as usize) * (height as usize) * (channels as usize);
    let noisy = r.f32s(n)?;
    let condition = r.f32s(n)?;
    if r.pos != buf.len() {
        return Err(OracleError::Malformed(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(EditRequest {
        width,
        height,
        channels,
        t,
        text_scale,
        image_scale,
        prompt,
        noisy,
        condition,
    })
}

pub fn encode_f32_array(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * values.len());
    put_f32s(&mut out, values);
    out
}

/// Decodes exactly `expected` little-endian f32 values; non-finite values are rejected.
pub fn decode_f32_array(buf: &[u8], expected: usize) -> Result<Vec<f32>, OracleError> {
    if buf.len() != 4 * expected {
        return Err(OracleError::Malformed(format!(
            "expected {expected} f32 values ({} bytes), got {} bytes",
            4 * expected,
            buf.len()
        )));
    }
    let v = Reader { buf, pos: 0 }.f32s(expected)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(OracleError::Malformed("non-finite value in reply".into()));
    }
    Ok(v)
}

/// `/embed-image` body: `{width, height, channels: u32}` then row-major f32 pixels.
pub fn encode_image_embed_request(width: u32, height: u32, channels: u32, data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * data.len());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    put_f32s(&mut out, data);
    out
}

pub fn decode_image_embed_request(buf: &[u8]) -> Result<(u32, u32, u32, Vec<f32>), OracleError> {
    let mut r = Reader { buf, pos: 0 };
    let (w, h, c) = (r.u32()?, r.u32()?, r.u32()?);
    let data = r.f32s(w as usize * h as usize * c as usize)?;
    if r.pos != buf.len() {
        return Err(OracleError::Malformed("trailing bytes".into()));
    }
    Ok((w, h, c, data))
}

/// `/embed-text` body: `len: u32` then UTF-8 text.
pub fn encode_text_embed_request(text: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + text.len());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out
}

pub fn decode_text_embed_request(buf: &[u8]) -> Result<String, OracleError> {
    let mut r = Reader { buf, pos: 0 };
    let n = r.u32()? as usize;
    let s = std::str::from_utf8(r.take(n)?)
        .map_err(|e| OracleError::Malformed(format!("text is not UTF-8: {e}")))?
        .to_owned();
    if r.pos != buf.len() {
        return Err(OracleError::Malformed("trailing bytes".into()));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_request_round_trip_and_layout() {
        let req = EditRequest {
            width: 2,
            height: 1,
            channels: 3,
            t: 0.5,
            text_scale: 100.0,
            image_scale: 10.0,
            prompt: "make it red".into(),
            noisy: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            condition: vec![1.0; 6],
        };
        let bytes = encode_edit_request(&req);
        assert_eq!(bytes.len(), EDIT_HEADER_LEN + 11 + 48);
        assert_eq!(&bytes[0..4], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &0.5f32.to_le_bytes());
        assert_eq!(&bytes[24..28], &11u32.to_le_bytes());
        assert_eq!(&bytes[28..39], b"make it red");
        assert_eq!(decode_edit_request(&bytes).unwrap(), req);
        assert!(decode_edit_request(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn reply_length_and_finiteness_checked() {
        let ok = encode_f32_array(&[1.0, 2.0]);
        assert_eq!(decode_f32_array(&ok, 2).unwrap(), vec![1.0, 2.0]);
        assert!(decode_f32_array(&ok, 3).is_err());
        assert!(decode_f32_array(&encode_f32_array(&[f32::NAN]), 1).is_err());
    }

    #[test]
    fn embed_requests_round_trip() {
        let b = encode_image_embed_request(1, 1, 3, &[0.5, 0.25, 1.0]);
        assert_eq!(decode_image_embed_request(&b).unwrap(), (1, 1, 3, vec![0.5, 0.25, 1.0]));
        assert_eq!(decode_text_embed_request(&encode_text_embed_request("a red sphere")).unwrap(), "a red sphere");
    }
}

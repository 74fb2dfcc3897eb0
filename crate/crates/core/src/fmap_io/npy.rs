//! Minimal NPY reader/writer covering the float arrays the pipeline exchanges.
//!
//! Reading accepts versions 1.0-3.0, `<f4`/`<f8` (and their big-endian
//! forms), in either memory order. Writing always produces v1.0 `<f4` C-order.

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug)]
pub(crate) struct Array {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Dtype {
    F4,
    F8,
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Array, String> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err("bad magic string".into());
    }
    let major = bytes[6];
    let (header_len, header_start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err("truncated header length".into());
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(format!("unsupported version {v}.{}", bytes[7])),
    };
    let header_end = header_start + header_len;
    let header = bytes
        .get(header_start..header_end)
        .ok_or("truncated header")?;
    let header = std::str::from_utf8(header).map_err(|_| "header is not valid text")?;

    let descr = dict_value(header, "descr").ok_or("header missing 'descr'")?;
    let descr = descr.trim().trim_matches(|c| c == '\'' || c == '"');
    let (dtype, little) = match descr {
        "<f4" => (Dtype::F4, true),
        ">f4" => (Dtype::F4, false),
        "<f8" => (Dtype::F8, true),
        ">f8" => (Dtype::F8, false),
        other => return Err(format!("unsupported dtype '{other}' (expected float32)")),
    };
    let fortran = match dict_value(header, "fortran_order").map(str::trim) {
        Some("False") => false,
        Some("True") => true,
        _ => return Err("header missing or invalid 'fortran_order'".into()),
    };
    let shape_text = dict_value(header, "shape").ok_or("header missing 'shape'")?;
    let shape = parse_shape(shape_text)?;

    let count: usize = shape.iter().product();
    let width = match dtype {
        Dtype::F4 => 4,
        Dtype::F8 => 8,
    };
    let body = &bytes[header_end..];
    if body.len() < count * width {
        return Err(format!(
            "truncated data: expected {} bytes, found {}",
            count * width,
            body.len()
        ));
    }
    let mut data: Vec<f64> = body[..count * width]
        .chunks_exact(width)
        .map(|c| match (dtype, little) {
            (Dtype::F4, true) => f32::from_le_bytes(c.try_into().unwrap()) as f64,
            (Dtype::F4, false) => f32::from_be_bytes(c.try_into().unwrap()) as f64,
            (Dtype::F8, true) => f64::from_le_bytes(c.try_into().unwrap()),
            (Dtype::F8, false) => f64::from_be_bytes(c.try_into().unwrap()),
        })
        .collect();
    if fortran && shape.len() == 2 {
        let (rows, cols) = (shape[0], shape[1]);
        let mut c_order = vec![0.0; count];
        for r in 0..rows {
            for c in 0..cols {
                c_order[r * cols + c] = data[c * rows + r];
            }
        }
        data = c_order;
    } else if fortran && shape.len() > 2 {
        return Err("fortran order only supported for 2D arrays".into());
    }
    Ok(Array { shape, data })
}

/// Extracts the raw text of `key`'s value from a Python dict literal.
fn dict_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let pattern_sq = format!("'{key}'");
    let pattern_dq = format!("\"{key}\"");
    let at = header
        .find(&pattern_sq)
        .map(|i| i + pattern_sq.len())
        .or_else(|| header.find(&pattern_dq).map(|i| i + pattern_dq.len()))?;
    let rest = header[at..].trim_start().strip_prefix(':')?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')? + 1
    } else {
        rest.find([',', '}']).unwrap_or(rest.len())
    };
    Some(&rest[..end])
}

fn parse_shape(text: &str) -> Result<Vec<usize>, String> {
    let inner = text
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| format!("invalid shape '{text}'"))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| format!("invalid shape '{text}'")))
        .collect()
}

pub(crate) fn encode_f32(shape: &[usize], values: &[f64]) -> Vec<u8> {
    let shape_text = match shape {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header =
        format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {shape_text}, }}");
    // Pad so the data starts on a 64-byte boundary; the header ends in '\n'.
    let unpadded = MAGIC.len() + 4 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_aligned() {
        let bytes = encode_f32(&[3, 5], &[0.0; 15]);
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        assert_eq!(bytes[10 + header_len - 1], b'\n');
    }

    #[test]
    fn decodes_numpy_style_header() {
        let header = "{'descr': '<f8', 'fortran_order': True, 'shape': (2, 3), }";
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        // column-major [[1,2,3],[4,5,6]]
        for v in [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let a = decode(&bytes).unwrap();
        assert_eq!(a.shape, vec![2, 3]);
        assert_eq!(a.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn reports_offending_property() {
        assert!(decode(b"garbage!!!!!").unwrap_err().contains("magic"));
        let mut bytes = encode_f32(&[2, 2], &[0.0; 4]);
        let pos = bytes.windows(3).position(|w| w == b"<f4").unwrap();
        bytes[pos..pos + 3].copy_from_slice(b"<i4");
        assert!(decode(&bytes).unwrap_err().contains("dtype"));
        let bytes = encode_f32(&[2, 2], &[0.0; 4]);
        assert!(decode(&bytes[..bytes.len() - 3])
            .unwrap_err()
            .contains("truncated"));
    }
}

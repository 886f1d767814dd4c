//! On-disk formats.
//!
//! * events: text, one `t x y p` per line. Optional `# sensor W H` and
//!   `# window T0 T1` header comments; other `#` lines are ignored.
//! * point clouds: text, `x y z` per line, `#` comments.
//! * images: binary PGM (P5) / PPM (P6), 8 or 16 bit. Depth maps are 16-bit
//!   PGM holding millimetres, tagged with a `# depth_mm` comment.
//! * 2D flow: `VMFL`, u32 width, u32 height (little-endian), `width*height`
//!   little-endian f32 `(du, dv)` pairs row-major, then one u8 mask per pixel.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Event, EventStream, FlowField2D, Image, PointCloud, Polarity, ProjectedPoints, Semantics};
use crate::error::{Error, Result};

pub const FLOW_MAGIC: &[u8; 4] = b"VMFL";
pub const DEPTH_MM_TAG: &str = "depth_mm";

// ---------------------------------------------------------------- events

/// Parse the event text format. `geometry` overrides a `# sensor` header.
pub fn parse_events(text: &str, geometry: Option<(usize, usize)>) -> Result<EventStream> {
    let mut geom = geometry;
    let mut window: Option<(f64, f64)> = None;
    let mut events: Vec<Event> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let toks: Vec<&str> = comment.split_whitespace().collect();
            match toks.first().copied() {
                Some("sensor") => {
                    let (w, h) = parse_pair::<usize>(&toks[1..], line_no, "sensor")?;
                    if w == 0 || h == 0 {
                        return Err(Error::parse_line(line_no, "sensor size must be positive"));
                    }
                    if geom.is_none() {
                        geom = Some((w, h));
                    }
                }
                Some("window") => {
                    let (a, b) = parse_pair::<f64>(&toks[1..], line_no, "window")?;
                    if !(a.is_finite() && b.is_finite() && a <= b) {
                        return Err(Error::parse_line(line_no, "window must be finite and ordered"));
                    }
                    window = Some((a, b));
                }
                _ => {}
            }
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(Error::parse_line(
                line_no,
                format!("expected `t x y p`, got {} fields", toks.len()),
            ));
        }
        let (w, h) = geom.ok_or_else(|| Error::parse_line(line_no, "sensor geometry unknown (add `# sensor W H`)"))?;
        let t: f64 = toks[0]
            .parse()
            .map_err(|_| Error::parse_line(line_no, format!("bad timestamp `{}`", toks[0])))?;
        if !t.is_finite() {
            return Err(Error::parse_line(line_no, "non-finite timestamp"));
        }
        let x: u32 = toks[1]
            .parse()
            .map_err(|_| Error::parse_line(line_no, format!("bad x `{}`", toks[1])))?;
        let y: u32 = toks[2]
            .parse()
            .map_err(|_| Error::parse_line(line_no, format!("bad y `{}`", toks[2])))?;
        if x as usize >= w || y as usize >= h {
            return Err(Error::parse_line(line_no, format!("({x}, {y}) outside {w}x{h}")));
        }
        let p = match toks[3] {
            "1" | "+1" => Polarity::Positive,
            "-1" => Polarity::Negative,
            other => {
                return Err(Error::parse_line(
                    line_no,
                    format!("polarity `{other}` not in {{-1, +1}}"),
                ))
            }
        };
        if let Some(prev) = events.last() {
            if t < prev.t {
                return Err(Error::parse_line(line_no, "timestamps not sorted"));
            }
        }
        if let Some((a, b)) = window {
            if t < a || t > b {
                return Err(Error::parse_line(line_no, format!("t={t} outside window [{a}, {b}]")));
            }
        }
        events.push(Event { x, y, t, p });
    }
    let (w, h) = geom.unwrap_or((0, 0));
    let window = window.unwrap_or_else(|| match (events.first(), events.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => (0.0, 0.0),
    });
    EventStream::new(w, h, window, events)
}

pub fn format_events(ev: &EventStream) -> String {
    let mut s = String::new();
    let (t0, t1) = ev.window();
    let _ = writeln!(s, "# sensor {} {}", ev.width(), ev.height());
    let _ = writeln!(s, "# window {t0:?} {t1:?}");
    for e in ev.events() {
        let _ = writeln!(s, "{:?} {} {} {}", e.t, e.x, e.y, e.p.sign());
    }
    s
}

pub fn load_events(path: impl AsRef<Path>, geometry: Option<(usize, usize)>) -> Result<EventStream> {
    parse_events(&fs::read_to_string(path)?, geometry)
}

pub fn save_events(path: impl AsRef<Path>, ev: &EventStream) -> Result<()> {
    fs::write(path, format_events(ev))?;
    Ok(())
}

fn parse_pair<T: std::str::FromStr>(toks: &[&str], line: usize, what: &str) -> Result<(T, T)> {
    if toks.len() != 2 {
        return Err(Error::parse_line(line, format!("`{what}` header needs two values")));
    }
    let a = toks[0]
        .parse()
        .map_err(|_| Error::parse_line(line, format!("bad {what} value")))?;
    let b = toks[1]
        .parse()
        .map_err(|_| Error::parse_line(line, format!("bad {what} value")))?;
    Ok((a, b))
}

// ---------------------------------------------------------------- clouds

pub fn parse_cloud(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::parse_line(
                line_no,
                format!("expected `x y z`, got {} fields", toks.len()),
            ));
        }
        let mut p = [0.0; 3];
        for (c, tok) in toks.iter().enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse_line(line_no, format!("bad coordinate `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::parse_line(line_no, format!("non-finite coordinate `{tok}`")));
            }
            p[c] = v;
        }
        points.push(p);
    }
    PointCloud::new(points)
}

pub fn format_cloud(pc: &PointCloud) -> String {
    let mut s = String::new();
    for p in &pc.points {
        let _ = writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]);
    }
    s
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_cloud(&fs::read_to_string(path)?)
}

pub fn save_cloud(path: impl AsRef<Path>, pc: &PointCloud) -> Result<()> {
    fs::write(path, format_cloud(pc))?;
    Ok(())
}

/// Densified 2D coordinates as `u v d` lines under a `#densified` header.
pub fn format_densified(points: &ProjectedPoints) -> String {
    let mut s = String::from("#densified\n");
    for e in points.iter() {
        let _ = writeln!(s, "{:?} {:?} {:?}", e.u, e.v, e.d);
    }
    s
}

// ---------------------------------------------------------------- PGM / PPM

struct PnmHeader {
    channels: usize,
    width: usize,
    height: usize,
    maxval: u32,
    comments: Vec<String>,
    data_offset: usize,
}

fn parse_pnm_header(bytes: &[u8]) -> Result<PnmHeader> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::parse_offset(0, "missing PNM magic"));
    }
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        other => {
            return Err(Error::parse_offset(
                1,
                format!("unsupported PNM type P{}", other as char),
            ))
        }
    };
    let mut pos = 2;
    let mut comments = Vec::new();
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    let end = bytes[pos..]
                        .iter()
                        .position(|&b| b == b'\n')
                        .map_or(bytes.len(), |e| pos + e);
                    comments.push(String::from_utf8_lossy(&bytes[pos + 1..end]).trim().to_string());
                    pos = end;
                }
                Some(_) => break,
                None => return Err(Error::parse_offset(pos, "truncated PNM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse_offset(pos, "expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse_offset(start, "header field out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::parse_offset(pos, "expected whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::parse_offset(pos, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse_offset(pos, format!("maxval {maxval} outside 1..=65535")));
    }
    Ok(PnmHeader {
        channels,
        width: width as usize,
        height: height as usize,
        maxval,
        comments,
        data_offset: pos,
    })
}

/// Decode a PGM/PPM into an image with the requested semantics.
pub fn decode_pnm(bytes: &[u8], semantics: Semantics) -> Result<Image> {
    let hdr = parse_pnm_header(bytes)?;
    let want_channels = match semantics {
        Semantics::Rgb => 3,
        Semantics::Yuv => hdr.channels,
        Semantics::Luma | Semantics::Depth => 1,
        Semantics::Intensity => return Err(Error::Format("signed intensity maps have no PNM encoding".into())),
    };
    if hdr.channels != want_channels {
        return Err(Error::Format(format!(
            "{semantics:?} needs {want_channels} channel(s), file has {}",
            hdr.channels
        )));
    }
    let wide = hdr.maxval > 255;
    let bps = if wide { 2 } else { 1 };
    let (n, size) = hdr
        .width
        .checked_mul(hdr.height)
        .and_then(|p| p.checked_mul(hdr.channels))
        .and_then(|n| Some((n, n.checked_mul(bps)?)))
        .ok_or_else(|| Error::parse_offset(0, "image dimensions overflow"))?;
    let body = &bytes[hdr.data_offset..];
    if body.len() != size {
        return Err(Error::parse_offset(
            hdr.data_offset,
            format!("raster has {} bytes, expected {size}", body.len()),
        ));
    }
    let depth_mm = hdr.comments.iter().any(|c| c == DEPTH_MM_TAG);
    if semantics == Semantics::Depth && !depth_mm {
        return Err(Error::Format(format!("depth PGM lacks `# {DEPTH_MM_TAG}` comment")));
    }
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let raw = if wide {
            u16::from_be_bytes([body[2 * i], body[2 * i + 1]]) as u32
        } else {
            body[i] as u32
        };
        if raw > hdr.maxval {
            return Err(Error::parse_offset(
                hdr.data_offset + i * bps,
                format!("sample {raw} exceeds maxval {}", hdr.maxval),
            ));
        }
        data.push(match semantics {
            Semantics::Depth => raw as f64 / 1000.0,
            _ => raw as f64 / hdr.maxval as f64,
        });
    }
    Image::new(hdr.width, hdr.height, hdr.channels, semantics, data)
}

/// Encode an image as PGM/PPM. Depth is always 16-bit millimetres; other
/// images use 16 bits when `wide` is set.
pub fn encode_pnm(img: &Image, wide: bool) -> Result<Vec<u8>> {
    img.validate()?;
    let (magic, maxval, wide, comment) = match img.semantics {
        Semantics::Intensity => return Err(Error::Format("signed intensity maps have no PNM encoding".into())),
        Semantics::Depth => ("P5", 65535u32, true, Some(DEPTH_MM_TAG)),
        _ if img.channels == 3 => ("P6", if wide { 65535 } else { 255 }, wide, None),
        _ => ("P5", if wide { 65535 } else { 255 }, wide, None),
    };
    let mut out = Vec::new();
    out.extend_from_slice(magic.as_bytes());
    out.push(b'\n');
    if let Some(c) = comment {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    out.extend_from_slice(format!("{} {}\n{}\n", img.width, img.height, maxval).as_bytes());
    for &v in &img.data {
        let q = match img.semantics {
            Semantics::Depth => (v * 1000.0).round().min(65535.0),
            _ => (v * maxval as f64).round(),
        } as u32;
        if wide {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    Ok(out)
}

pub fn load_image(path: impl AsRef<Path>, semantics: Semantics) -> Result<Image> {
    decode_pnm(&fs::read(path)?, semantics)
}

pub fn save_image(path: impl AsRef<Path>, img: &Image, wide: bool) -> Result<()> {
    fs::write(path, encode_pnm(img, wide)?)?;
    Ok(())
}

/// Cluster labels as a 16-bit PGM (ids saturate at 65535).
pub fn encode_label_pgm(labels: &[usize], width: usize, height: usize) -> Vec<u8> {
    let mut out = format!("P5\n# cluster labels\n{width} {height}\n65535\n").into_bytes();
    for &l in labels {
        out.extend_from_slice(&(l.min(65535) as u16).to_be_bytes());
    }
    out
}

/// Raw 8-bit RGB triplets as PPM.
pub fn encode_ppm_rgb8(width: usize, height: usize, rgb: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for px in rgb {
        out.extend_from_slice(px);
    }
    out
}

// ---------------------------------------------------------------- flow

pub fn encode_flow(flow: &FlowField2D) -> Vec<u8> {
    let n = flow.width * flow.height;
    let mut out = Vec::with_capacity(12 + 9 * n);
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(flow.width as u32).to_le_bytes());
    out.extend_from_slice(&(flow.height as u32).to_le_bytes());
    for &v in &flow.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&flow.valid);
    out
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField2D> {
    if bytes.len() < 12 {
        return Err(Error::parse_offset(bytes.len(), "truncated flow header"));
    }
    if &bytes[..4] != FLOW_MAGIC {
        return Err(Error::parse_offset(0, "bad flow magic"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse_offset(4, "flow dimensions overflow"))?;
    let expected = n
        .checked_mul(9)
        .and_then(|b| b.checked_add(12))
        .ok_or_else(|| Error::parse_offset(4, "flow dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::parse_offset(
            bytes.len().min(expected),
            format!("flow file has {} bytes, expected {expected}", bytes.len()),
        ));
    }
    let mask_at = 12 + 8 * n;
    let mut data = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let off = 12 + 4 * i;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::parse_offset(off, "non-finite flow component"));
        }
        data.push(v as f64);
    }
    let valid = bytes[mask_at..].to_vec();
    for (i, &m) in valid.iter().enumerate() {
        if m > 1 {
            return Err(Error::parse_offset(
                mask_at + i,
                format!("mask byte {m} not in {{0, 1}}"),
            ));
        }
        if m == 0 && (data[2 * i] != 0.0 || data[2 * i + 1] != 0.0) {
            return Err(Error::parse_offset(12 + 8 * i, "invalid pixel carries nonzero flow"));
        }
    }
    FlowField2D::new(width, height, data, valid)
}

pub fn load_flow(path: impl AsRef<Path>) -> Result<FlowField2D> {
    decode_flow(&fs::read(path)?)
}

pub fn save_flow(path: impl AsRef<Path>, flow: &FlowField2D) -> Result<()> {
    fs::write(path, encode_flow(flow))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Location;
    use proptest::prelude::*;

    #[test]
    fn empty_event_file_is_empty_stream() {
        let s = parse_events("", Some((4, 4))).unwrap();
        assert!(s.is_empty());
        let s = parse_events("# just a comment\n", None).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn events_round_trip() {
        let text = "# sensor 8 6\n# window 0.0 1.0\n0.1 1 2 1\n0.25 7 5 -1\n0.25 0 0 +1\n";
        let s = parse_events(text, None).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!((s.width(), s.height()), (8, 6));
        let again = parse_events(&format_events(&s), None).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn event_errors_name_the_line() {
        let cases = [
            "# sensor 4 4\n0.1 1 1 1\n0.05 1 1 1\n",
            "# sensor 4 4\n0.1 1 1 1\n0.2 4 1 1\n",
            "# sensor 4 4\n0.1 1 1 1\n0.2 1 1 0\n",
            "# sensor 4 4\n0.1 1 1 1\n0.2 1 1\n",
            "# sensor 4 4\n0.1 1 1 1\n0.2 -1 1 1\n",
            "# sensor 4 4\n0.1 1 1 1\nnan 1 1 1\n",
        ];
        for text in cases {
            match parse_events(text, None) {
                Err(Error::Parse { location, .. }) => assert_eq!(location, Location::Line(3), "{text}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
        assert!(parse_events("0.1 1 1 1\n", None).is_err());
    }

    #[test]
    fn nan_point_rejected_with_line() {
        match parse_cloud("0 0 1\n1.0 2.0 NaN\n") {
            Err(Error::Parse { location, .. }) => assert_eq!(location, Location::Line(2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_cloud("1 2\n").is_err());
        assert_eq!(parse_cloud("#densified\n1 2 3\n").unwrap().len(), 1);
    }

    #[test]
    fn pgm_round_trip_8_and_16_bit() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 / 255.0).collect();
        let img = Image::new(4, 3, 1, Semantics::Luma, data).unwrap();
        let back = decode_pnm(&encode_pnm(&img, false).unwrap(), Semantics::Luma).unwrap();
        assert_eq!(img, back);
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 1000.0 / 65535.0).collect();
        let img = Image::new(4, 3, 1, Semantics::Luma, data).unwrap();
        let back = decode_pnm(&encode_pnm(&img, true).unwrap(), Semantics::Luma).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn depth_pgm_is_millimetres() {
        let img = Image::new(2, 1, 1, Semantics::Depth, vec![0.0, 12.345]).unwrap();
        let bytes = encode_pnm(&img, false).unwrap();
        assert!(String::from_utf8_lossy(&bytes[..20]).contains("# depth_mm"));
        let back = decode_pnm(&bytes, Semantics::Depth).unwrap();
        assert_eq!(back.data, vec![0.0, 12.345]);
    }

    #[test]
    fn ppm_rgb_round_trip() {
        let data: Vec<f64> = (0..18).map(|i| (i * 10) as f64 / 255.0).collect();
        let img = Image::new(3, 2, 3, Semantics::Rgb, data).unwrap();
        let back = decode_pnm(&encode_pnm(&img, false).unwrap(), Semantics::Rgb).unwrap();
        assert_eq!(img, back);
        assert!(decode_pnm(&encode_pnm(&img, false).unwrap(), Semantics::Luma).is_err());
    }

    #[test]
    fn malformed_pnm_rejected() {
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00\x01\x02", Semantics::Luma).is_err());
        assert!(decode_pnm(b"P7\n2 2\n255\n\x00\x01\x02\x03", Semantics::Luma).is_err());
        assert!(decode_pnm(b"P5\n2 2\n100\n\x00\x01\x02\xff", Semantics::Luma).is_err());
        assert!(decode_pnm(b"P5\n# hi\n2 2\n255\n\x00\x01\x02\x03", Semantics::Luma).is_ok());
    }

    #[test]
    fn flow_rejects_corruption() {
        let flow = FlowField2D::uniform(3, 2, 1.5, -0.25);
        let bytes = encode_flow(&flow);
        assert!(decode_flow(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_flow(&bad).is_err());
        let mut bad = bytes.clone();
        let last = bad.len() - 1;
        bad[last] = 2;
        assert!(decode_flow(&bad).is_err());
        let mut bad = bytes.clone();
        bad[last] = 0; // invalid pixel with nonzero flow
        assert!(decode_flow(&bad).is_err());
    }

    proptest! {
        #[test]
        fn flow_round_trip_is_bit_exact(
            w in 1usize..6,
            h in 1usize..6,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = w * h;
            let valid: Vec<u8> = (0..n).map(|_| rng.random_bool(0.7) as u8).collect();
            let mut data = vec![0.0; 2 * n];
            for i in 0..n {
                if valid[i] == 1 {
                    data[2 * i] = rng.random_range(-50.0f32..50.0) as f64;
                    data[2 * i + 1] = rng.random_range(-50.0f32..50.0) as f64;
                }
            }
            let flow = FlowField2D::new(w, h, data, valid).unwrap();
            let bytes = encode_flow(&flow);
            let back = decode_flow(&bytes).unwrap();
            prop_assert_eq!(&flow, &back);
            prop_assert_eq!(encode_flow(&back), bytes);
        }

        #[test]
        fn mutated_flow_files_never_panic(seed in any::<u64>(), flips in 1usize..8) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut bytes = encode_flow(&FlowField2D::uniform(4, 3, 0.5, 2.0));
            for _ in 0..flips {
                let i = rng.random_range(0..bytes.len());
                bytes[i] = rng.random();
            }
            if rng.random_bool(0.3) {
                let cut = rng.random_range(0..bytes.len());
                bytes.truncate(cut);
            }
            let _ = decode_flow(&bytes);
        }

        #[test]
        fn mutated_text_never_panics(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut text: Vec<u8> = b"# sensor 4 4\n0.1 1 1 1\n0.2 2 3 -1\n".to_vec();
            for _ in 0..3 {
                let i = rng.random_range(0..text.len());
                text[i] = rng.random_range(32u8..127);
            }
            let s = String::from_utf8_lossy(&text);
            let _ = parse_events(&s, None);
            let _ = parse_cloud(&s);
            let _ = decode_pnm(&text, Semantics::Luma);
        }
    }
}

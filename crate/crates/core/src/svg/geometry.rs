//! Number lexing, transforms and bounding boxes in user units.

/// Axis-aligned box; always well-ordered (`min <= max`).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn from_point(x: f64, y: f64) -> BBox {
        BBox {
            min_x: x,
            min_y: y,
            max_x: x,
            max_y: y,
        }
    }

    pub fn from_rect(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox {
            min_x: x.min(x + w),
            min_y: y.min(y + h),
            max_x: x.max(x + w),
            max_y: y.max(y + h),
        }
    }

    pub fn from_points(points: impl IntoIterator<Item = (f64, f64)>) -> Option<BBox> {
        points.into_iter().fold(None, |acc, (x, y)| {
            let p = BBox::from_point(x, y);
            Some(match acc {
                Some(b) => b.union(&p),
                None => p,
            })
        })
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.min_x, self.min_y),
            (self.max_x, self.min_y),
            (self.max_x, self.max_y),
            (self.min_x, self.max_y),
        ]
    }

    /// Box of the four transformed corners.
    pub fn transformed(&self, t: &Affine) -> BBox {
        BBox::from_points(self.corners().map(|(x, y)| t.apply(x, y)))
            .expect("four corners")
    }
}

/// 2D affine transform `[a b c d e f]` as in the SVG `matrix()` function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine(pub [f64; 6]);

impl Affine {
    pub const IDENTITY: Affine = Affine([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, c, d, e, f] = self.0;
        (a * x + c * y + e, b * x + d * y + f)
    }

    /// `self` applied after `inner`.
    pub fn then(&self, inner: &Affine) -> Affine {
        let [a1, b1, c1, d1, e1, f1] = self.0;
        let [a2, b2, c2, d2, e2, f2] = inner.0;
        Affine([
            a1 * a2 + c1 * b2,
            b1 * a2 + d1 * b2,
            a1 * c2 + c1 * d2,
            b1 * c2 + d1 * d2,
            a1 * e2 + c1 * f2 + e1,
            b1 * e2 + d1 * f2 + f1,
        ])
    }
}

/// Either a number token or the literal text between numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Segment<'a> {
    Number(&'a str),
    Other(&'a str),
}

/// Length of the number token starting at `s`, if any.
fn number_len(s: &[u8]) -> Option<usize> {
    let mut i = 0;
    if matches!(s.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < s.len() && s[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < s.len() && s[i] == b'.' {
        let frac_start = i + 1;
        let mut j = frac_start;
        while j < s.len() && s[j].is_ascii_digit() {
            j += 1;
        }
        if j > frac_start || digits > 0 {
            digits += j - frac_start;
            i = j;
        }
    }
    if digits == 0 {
        return None;
    }
    if i < s.len() && matches!(s[i], b'e' | b'E') {
        let mut j = i + 1;
        if j < s.len() && matches!(s[j], b'+' | b'-') {
            j += 1;
        }
        let exp_start = j;
        while j < s.len() && s[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            i = j;
        }
    }
    Some(i)
}

pub(crate) fn segments(s: &str) -> Vec<Segment<'_>> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut other_start = 0;
    // Inside an identifier or hex color (`#1a2b3c`, `x2`), digits are not numbers.
    let mut in_word = false;
    while i < bytes.len() {
        let b = bytes[i];
        let candidate = if in_word { None } else { number_len(&bytes[i..]) };
        match candidate {
            Some(len) => {
                if other_start < i {
                    out.push(Segment::Other(&s[other_start..i]));
                }
                out.push(Segment::Number(&s[i..i + len]));
                i += len;
                other_start = i;
            }
            None => {
                in_word = b == b'#'
                    || b == b'_'
                    || (b.is_ascii_alphabetic() && !is_path_command(b))
                    || (in_word && b.is_ascii_alphanumeric());
                i += s[i..].chars().next().map_or(1, char::len_utf8);
            }
        }
    }
    if other_start < bytes.len() {
        out.push(Segment::Other(&s[other_start..]));
    }
    out
}

fn is_path_command(b: u8) -> bool {
    b"MmLlHhVvCcSsQqTtAaZz".contains(&b)
}

/// Whitespace/comma separated list of numbers; `None` if anything else is present.
pub fn parse_number_list(s: &str) -> Option<Vec<f64>> {
    let mut out = Vec::new();
    for seg in segments(s) {
        match seg {
            Segment::Number(n) => out.push(n.parse::<f64>().ok()?),
            Segment::Other(o) => {
                if !o.chars().all(|c| c.is_whitespace() || c == ',') {
                    return None;
                }
            }
        }
    }
    Some(out)
}

/// Parses an SVG `transform` attribute list.
pub fn parse_transform(s: &str) -> Option<Affine> {
    let mut result = Affine::IDENTITY;
    let mut rest = s.trim();
    while !rest.is_empty() {
        let open = rest.find('(')?;
        let close = rest.find(')')?;
        if close < open {
            return None;
        }
        let name = rest[..open].trim().trim_start_matches(',').trim();
        let args = parse_number_list(&rest[open + 1..close])?;
        let t = match (name, args.as_slice()) {
            ("matrix", &[a, b, c, d, e, f]) => Affine([a, b, c, d, e, f]),
            ("translate", &[tx]) => Affine([1.0, 0.0, 0.0, 1.0, tx, 0.0]),
            ("translate", &[tx, ty]) => Affine([1.0, 0.0, 0.0, 1.0, tx, ty]),
            ("scale", &[s]) => Affine([s, 0.0, 0.0, s, 0.0, 0.0]),
            ("scale", &[sx, sy]) => Affine([sx, 0.0, 0.0, sy, 0.0, 0.0]),
            ("rotate", &[deg]) => rotation(deg),
            ("rotate", &[deg, cx, cy]) => {
                let to = Affine([1.0, 0.0, 0.0, 1.0, cx, cy]);
                let back = Affine([1.0, 0.0, 0.0, 1.0, -cx, -cy]);
                to.then(&rotation(deg)).then(&back)
            }
            ("skewX", &[deg]) => Affine([1.0, 0.0, deg.to_radians().tan(), 1.0, 0.0, 0.0]),
            ("skewY", &[deg]) => Affine([1.0, deg.to_radians().tan(), 0.0, 1.0, 0.0, 0.0]),
            _ => return None,
        };
        result = result.then(&t);
        rest = rest[close + 1..].trim_start();
    }
    Some(result)
}

fn rotation(deg: f64) -> Affine {
    let (s, c) = deg.to_radians().sin_cos();
    Affine([c, s, -s, c, 0.0, 0.0])
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("bad path data at byte {offset}")]
pub struct PathError {
    pub offset: usize,
}

struct PathLexer<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> PathLexer<'a> {
    fn skip_separators(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_whitespace() || self.s[self.pos] == b',') {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_separators();
        self.pos >= self.s.len()
    }

    fn peek_command(&mut self) -> Option<u8> {
        self.skip_separators();
        self.s.get(self.pos).copied().filter(|b| is_path_command(*b))
    }

    fn number(&mut self) -> Result<f64, PathError> {
        self.skip_separators();
        let len = number_len(&self.s[self.pos..]).ok_or(PathError { offset: self.pos })?;
        let text = std::str::from_utf8(&self.s[self.pos..self.pos + len]).expect("ascii");
        self.pos += len;
        text.parse().map_err(|_| PathError { offset: self.pos })
    }

    fn flag(&mut self) -> Result<bool, PathError> {
        self.skip_separators();
        let b = self.s.get(self.pos).copied();
        self.pos += 1;
        match b {
            Some(b'0') => Ok(false),
            Some(b'1') => Ok(true),
            _ => Err(PathError { offset: self.pos - 1 }),
        }
    }

    fn has_number(&mut self) -> bool {
        self.skip_separators();
        number_len(&self.s[self.pos..]).is_some()
    }
}

/// Every endpoint and control point of a path, plus the extreme points of
/// each arc's full ellipse. The hull of these bounds the drawn path.
pub fn path_points(d: &str) -> Result<Vec<(f64, f64)>, PathError> {
    let mut lx = PathLexer { s: d.as_bytes(), pos: 0 };
    let mut pts = Vec::new();
    let (mut cx, mut cy) = (0.0f64, 0.0f64);
    let (mut start_x, mut start_y) = (0.0, 0.0);
    let mut cmd: Option<u8> = None;

    while !lx.at_end() {
        if let Some(c) = lx.peek_command() {
            lx.pos += 1;
            cmd = Some(c);
            if matches!(c, b'Z' | b'z') {
                cx = start_x;
                cy = start_y;
                cmd = None;
                continue;
            }
        } else if cmd.is_none() || !lx.has_number() {
            return Err(PathError { offset: lx.pos });
        }
        let c = cmd.expect("command set");
        let rel = c.is_ascii_lowercase();
        let (ox, oy) = if rel { (cx, cy) } else { (0.0, 0.0) };
        match c.to_ascii_uppercase() {
            b'M' | b'L' | b'T' => {
                let (x, y) = (lx.number()? + ox, lx.number()? + oy);
                pts.push((x, y));
                cx = x;
                cy = y;
                if c.eq_ignore_ascii_case(&b'M') {
                    start_x = x;
                    start_y = y;
                    // subsequent pairs are implicit lineto
                    cmd = Some(if rel { b'l' } else { b'L' });
                }
            }
            b'H' => {
                cx = lx.number()? + ox;
                pts.push((cx, cy));
            }
            b'V' => {
                cy = lx.number()? + oy;
                pts.push((cx, cy));
            }
            b'C' => {
                for _ in 0..3 {
                    let p = (lx.number()? + ox, lx.number()? + oy);
                    pts.push(p);
                    (cx, cy) = p;
                }
            }
            b'S' | b'Q' => {
                for _ in 0..2 {
                    let p = (lx.number()? + ox, lx.number()? + oy);
                    pts.push(p);
                    (cx, cy) = p;
                }
            }
            b'A' => {
                let rx = lx.number()?.abs();
                let ry = lx.number()?.abs();
                let phi = lx.number()?;
                let large = lx.flag()?;
                let sweep = lx.flag()?;
                let (x, y) = (lx.number()? + ox, lx.number()? + oy);
                pts.extend(arc_extent_points((cx, cy), (x, y), rx, ry, phi, large, sweep));
                pts.push((x, y));
                cx = x;
                cy = y;
            }
            _ => return Err(PathError { offset: lx.pos }),
        }
    }
    Ok(pts)
}

/// Corner points of the bounding box of the arc's whole ellipse
/// (endpoint-to-center conversion with radius correction).
fn arc_extent_points(
    (x1, y1): (f64, f64),
    (x2, y2): (f64, f64),
    mut rx: f64,
    mut ry: f64,
    phi_deg: f64,
    large: bool,
    sweep: bool,
) -> Vec<(f64, f64)> {
    if rx == 0.0 || ry == 0.0 || (x1 == x2 && y1 == y2) {
        return vec![(x1, y1)];
    }
    let (sin_phi, cos_phi) = phi_deg.to_radians().sin_cos();
    let dx = (x1 - x2) / 2.0;
    let dy = (y1 - y2) / 2.0;
    let x1p = cos_phi * dx + sin_phi * dy;
    let y1p = -sin_phi * dx + cos_phi * dy;
    let lambda = (x1p * x1p) / (rx * rx) + (y1p * y1p) / (ry * ry);
    if lambda > 1.0 {
        let s = lambda.sqrt();
        rx *= s;
        ry *= s;
    }
    let num = rx * rx * ry * ry - rx * rx * y1p * y1p - ry * ry * x1p * x1p;
    let den = rx * rx * y1p * y1p + ry * ry * x1p * x1p;
    let mut coef = if den == 0.0 { 0.0 } else { (num / den).max(0.0).sqrt() };
    if large == sweep {
        coef = -coef;
    }
    let cxp = coef * rx * y1p / ry;
    let cyp = -coef * ry * x1p / rx;
    let ccx = cos_phi * cxp - sin_phi * cyp + (x1 + x2) / 2.0;
    let ccy = sin_phi * cxp + cos_phi * cyp + (y1 + y2) / 2.0;
    // half-extents of a rotated ellipse
    let hx = ((rx * cos_phi).powi(2) + (ry * sin_phi).powi(2)).sqrt();
    let hy = ((rx * sin_phi).powi(2) + (ry * cos_phi).powi(2)).sqrt();
    vec![(ccx - hx, ccy - hy), (ccx + hx, ccy + hy)]
}

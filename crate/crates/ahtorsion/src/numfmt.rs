//! Number formatting for reports: every float is written with 17 significant
//! digits, non-finite values as `null`.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

/// `x` with 17 significant digits in exponent form, `"null"` if not finite.
pub fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

enum Layout {
    Pretty(PrettyFormatter<'static>),
    Compact(CompactFormatter),
}

/// JSON formatter that overrides float output and delegates layout.
struct Sig17Formatter(Layout);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                match &mut self.0 {
                    Layout::Pretty(f) => f.$name(w $(, $arg)*),
                    Layout::Compact(f) => f.$name(w $(, $arg)*),
                }
            }
        )*
    };
}

impl Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(sig17(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

fn write_with<T: Serialize + ?Sized>(value: &T, layout: Layout) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter(layout));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Pretty-printed JSON with 17-digit floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    write_with(value, Layout::Pretty(PrettyFormatter::with_indent(b"  ")))
}

/// Single-line JSON with 17-digit floats, for bulk arrays.
pub fn to_json_compact<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    write_with(value, Layout::Compact(CompactFormatter))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_17_digits_and_round_trip() {
        let xs = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0];
        let text = to_json_string(&xs.to_vec()).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, xs);
        assert!(text.contains("3.3333333333333331e-1"));
        assert_eq!(sig17(f64::NAN), "null");
        let v = serde_json::json!({"schema": 1, "x": [f64::INFINITY, 2.0]});
        let text = to_json_string(&v).unwrap();
        assert!(text.contains("\"schema\": 1,"));
        assert!(text.contains("null"));
        let compact = to_json_compact(&vec![vec![0.5, 1.0]]).unwrap();
        assert_eq!(compact, "[[5.0000000000000000e-1,1.0000000000000000e0]]\n");
    }
}

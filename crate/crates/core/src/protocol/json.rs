//! JSON output with every float written to 17 significant digits.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::error::Result;

/// `d.dddddddddddddddde±x`; non-finite values become `null`.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

struct Sig17<F>(F);

macro_rules! delegate {
    ($($name:ident ( $($arg:ident : $ty:ty),* )),* $(,)?) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.0.$name(w $(, $arg)*)
            }
        )*
    };
}

impl<F: Formatter> Formatter for Sig17<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        end_object_key(),
        begin_object_value(),
        end_object_value(),
    );
}

fn write<T: Serialize + ?Sized, F: Formatter>(value: &T, f: F) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(f));
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Single-line JSON.
pub fn to_line<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    write(value, CompactFormatter)
}

/// Indented JSON with a trailing newline.
pub fn to_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = write(value, PrettyFormatter::with_indent(b"  "))?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(to_line(&[0.5, 0.1]).unwrap(), "[5.0000000000000000e-1,1.0000000000000001e-1]");
        assert_eq!(to_line(&serde_json::json!({"a": 1, "b": [0.0]})).unwrap(), r#"{"a":1,"b":[0.0000000000000000e0]}"#);
        assert_eq!(to_line(&f64::NAN).unwrap(), "null");
    }

    #[test]
    fn pretty_layout() {
        let s = to_pretty(&serde_json::json!({"x": [1.0]})).unwrap();
        assert_eq!(s, "{\n  \"x\": [\n    1.0000000000000000e0\n  ]\n}\n");
    }

    proptest! {
        #[test]
        fn roundtrips_exactly(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let back: f64 = serde_json::from_str(&to_line(&x).unwrap()).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}

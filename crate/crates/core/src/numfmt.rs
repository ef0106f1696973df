//! Lossless text encoding of binary64 values.
//!
//! Every float written by this crate (model files, CSV tables, service
//! responses) uses 17 significant decimal digits in scientific notation,
//! which round-trips any finite `f64` exactly.

use std::io;

use serde::Serialize;

/// Formats `v` with 17 significant digits, e.g. `1.0000000000000000e0`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// JSON formatter that writes floats with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct Float17<F = serde_json::ser::CompactFormatter> {
    inner: F,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(
            #[inline]
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.inner.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl<F: serde_json::ser::Formatter> serde_json::ser::Formatter for Float17<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_f64(value).as_bytes())
        } else {
            // serde_json maps non-finite values to null
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
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

/// Serializes `value` as compact JSON with 17-digit floats.
pub fn to_json_vec<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Float17::<serde_json::ser::CompactFormatter>::default());
    value.serialize(&mut ser)?;
    Ok(out)
}

/// Serializes `value` as indented JSON with 17-digit floats.
pub fn to_json_vec_pretty<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        Float17 {
            inner: serde_json::ser::PrettyFormatter::new(),
        },
    );
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

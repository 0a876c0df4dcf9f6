//! Fixed-precision float formatting for reproducible JSON output.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};
use serde_json::value::RawValue;

/// `v` with 17 significant digits, or `null` when not finite.
pub fn format17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

/// A JSON number token with 17 significant digits.
pub fn raw17(v: f64) -> Box<RawValue> {
    RawValue::from_string(format17(v)).expect("formatted float is valid JSON")
}

pub fn raw17_vec(v: &[f64]) -> Box<RawValue> {
    let items: Vec<String> = v.iter().map(|x| format17(*x)).collect();
    RawValue::from_string(format!("[{}]", items.join(","))).expect("valid JSON array")
}

/// Pretty-printed JSON in which every float carries 17 significant digits.
pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, Fixed17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serialization into memory");
    String::from_utf8(out).expect("JSON is UTF-8")
}

struct Fixed17<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            let s = format17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let parsed: f64 = serde_json::from_str(raw17(v).get()).unwrap();
            assert_eq!(parsed, v);
        }
        assert_eq!(format17(f64::NAN), "null");
        assert_eq!(
            raw17_vec(&[1.0, 2.0]).get(),
            "[1.0000000000000000e0,2.0000000000000000e0]"
        );
    }

    #[test]
    fn pretty_output_fixes_float_width() {
        #[derive(Serialize)]
        struct Row {
            n: u32,
            v: Vec<f64>,
            missing: f64,
        }
        let s = to_json_pretty(&Row {
            n: 3,
            v: vec![0.5],
            missing: f64::INFINITY,
        });
        assert_eq!(
            s,
            "{\n  \"n\": 3,\n  \"v\": [\n    5.0000000000000000e-1\n  ],\n  \"missing\": null\n}"
        );
    }
}

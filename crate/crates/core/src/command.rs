//! Executable commands and their canonical bracketed text form.
//!
//! ```text
//! [search red scooter]
//! [adjust_color sky blue 0.5]
//! [adjust_attr brightness -30]
//! [adjust_attr contrast 40]
//! [rotate 90]
//! [image_cutout]
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const SEARCH: &str = "search";
pub const ADJUST_COLOR: &str = "adjust_color";
pub const ADJUST_ATTR: &str = "adjust_attr";
pub const BRIGHTNESS: &str = "brightness";
pub const CONTRAST: &str = "contrast";
pub const ROTATE: &str = "rotate";
pub const IMAGE_CUTOUT: &str = "image_cutout";

/// Keyword tokens that can appear in a command besides arguments.
pub const KEYWORDS: [&str; 7] = [
    SEARCH,
    ADJUST_COLOR,
    ADJUST_ATTR,
    BRIGHTNESS,
    CONTRAST,
    ROTATE,
    IMAGE_CUTOUT,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandError {
    #[error("malformed command syntax: {0}")]
    Syntax(String),
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("wrong number of arguments for `{command}`: {detail}")]
    Arity { command: String, detail: String },
    #[error("argument `{value}` outside range {range}")]
    Range { value: String, range: &'static str },
    #[error("argument `{0}` is not a valid number")]
    NonNumeric(String),
    #[error("unknown color `{0}`")]
    UnknownColor(String),
}

impl CommandError {
    /// Short stable name for the error class, used in API bodies and test tables.
    pub fn class(&self) -> &'static str {
        match self {
            CommandError::Syntax(_) => "SyntaxError",
            CommandError::UnknownCommand(_) => "UnknownCommand",
            CommandError::Arity { .. } => "ArityError",
            CommandError::Range { .. } => "RangeError",
            CommandError::NonNumeric(_) => "NonNumericArgument",
            CommandError::UnknownColor(_) => "UnknownColor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorName {
    Red,
    Orange,
    Green,
    Blue,
    SkyBlue,
    Purple,
    Brown,
    Yellow,
    Pink,
}

impl ColorName {
    pub const ALL: [ColorName; 9] = [
        ColorName::Red,
        ColorName::Orange,
        ColorName::Green,
        ColorName::Blue,
        ColorName::SkyBlue,
        ColorName::Purple,
        ColorName::Brown,
        ColorName::Yellow,
        ColorName::Pink,
    ];

    /// Surface tokens as they appear in commands and utterances.
    pub fn tokens(self) -> &'static [&'static str] {
        match self {
            ColorName::Red => &["red"],
            ColorName::Orange => &["orange"],
            ColorName::Green => &["green"],
            ColorName::Blue => &["blue"],
            ColorName::SkyBlue => &["sky", "blue"],
            ColorName::Purple => &["purple"],
            ColorName::Brown => &["brown"],
            ColorName::Yellow => &["yellow"],
            ColorName::Pink => &["pink"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColorName::SkyBlue => "sky blue",
            other => other.tokens()[0],
        }
    }

    /// Greedy longest match of a color name at the start of `tokens`.
    /// Returns the color and the number of tokens consumed.
    pub fn match_prefix<S: AsRef<str>>(tokens: &[S]) -> Option<(ColorName, usize)> {
        let mut best: Option<(ColorName, usize)> = None;
        for color in ColorName::ALL {
            let words = color.tokens();
            if tokens.len() >= words.len()
                && words.iter().zip(tokens).all(|(w, t)| *w == t.as_ref())
                && best.is_none_or(|(_, n)| words.len() > n)
            {
                best = Some((color, words.len()));
            }
        }
        best
    }
}

impl fmt::Display for ColorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColorName {
    type Err = CommandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        match ColorName::match_prefix(&tokens) {
            Some((color, n)) if n == tokens.len() => Ok(color),
            _ => Err(CommandError::UnknownColor(s.to_string())),
        }
    }
}

/// Color blend intensity in `[0.0, 1.0]`, stored as integer thousandths so
/// equality and round trips are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Intensity(u16);

impl Intensity {
    pub const MAX_MILLIS: u16 = 1000;

    pub fn from_millis(millis: u16) -> Result<Self, CommandError> {
        if millis > Self::MAX_MILLIS {
            return Err(CommandError::Range {
                value: format!("{}", millis as f64 / 1000.0),
                range: "0.0..=1.0",
            });
        }
        Ok(Intensity(millis))
    }

    pub fn millis(self) -> u16 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Canonical text: at least one and at most three fractional digits.
    pub fn to_text(self) -> String {
        let whole = self.0 / 1000;
        let frac = self.0 % 1000;
        let mut frac_text = format!("{frac:03}");
        while frac_text.len() > 1 && frac_text.ends_with('0') {
            frac_text.pop();
        }
        format!("{whole}.{frac_text}")
    }

    pub fn parse(text: &str) -> Result<Self, CommandError> {
        let non_numeric = || CommandError::NonNumeric(text.to_string());
        let (neg, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        if whole.is_empty()
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || (body.contains('.') && frac.is_empty())
            || frac.len() > 3
        {
            return Err(non_numeric());
        }
        let out_of_range = || CommandError::Range {
            value: text.to_string(),
            range: "0.0..=1.0",
        };
        let whole: u64 = whole.parse().map_err(|_| out_of_range())?;
        let mut frac_millis = 0u64;
        for (i, b) in frac.bytes().enumerate() {
            frac_millis += u64::from(b - b'0') * 10u64.pow(2 - i as u32);
        }
        let millis = whole.saturating_mul(1000).saturating_add(frac_millis);
        if millis > u64::from(Self::MAX_MILLIS) || (neg && millis > 0) {
            return Err(out_of_range());
        }
        Ok(Intensity(millis as u16))
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// The six executable commands.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Command {
    Search { query: Vec<String> },
    AdjustColor { color: ColorName, intensity: Intensity },
    AdjustBrightness { value: i32 },
    AdjustContrast { value: i32 },
    Rotate { degrees: i32 },
    ImageCutout,
}

/// Command type, used for per-type reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Search,
    Color,
    Brightness,
    Contrast,
    Rotation,
    RemoveBackground,
}

impl CommandKind {
    pub const ALL: [CommandKind; 6] = [
        CommandKind::Search,
        CommandKind::Color,
        CommandKind::Brightness,
        CommandKind::Contrast,
        CommandKind::Rotation,
        CommandKind::RemoveBackground,
    ];

    /// Column label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            CommandKind::Search => "search",
            CommandKind::Color => "color",
            CommandKind::Brightness => "brightness",
            CommandKind::Contrast => "contrast",
            CommandKind::Rotation => "rotation",
            CommandKind::RemoveBackground => "remove-back",
        }
    }
}

pub const BRIGHTNESS_RANGE: (i32, i32) = (-100, 100);
pub const CONTRAST_RANGE: (i32, i32) = (0, 100);
pub const ROTATE_RANGE: (i32, i32) = (0, 360);

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Search { .. } => CommandKind::Search,
            Command::AdjustColor { .. } => CommandKind::Color,
            Command::AdjustBrightness { .. } => CommandKind::Brightness,
            Command::AdjustContrast { .. } => CommandKind::Contrast,
            Command::Rotate { .. } => CommandKind::Rotation,
            Command::ImageCutout => CommandKind::RemoveBackground,
        }
    }

    /// Builds a search command, rejecting an empty or malformed query.
    pub fn search<I, S>(query: I) -> Result<Self, CommandError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let query: Vec<String> = query.into_iter().map(|t| t.as_ref().to_string()).collect();
        let cmd = Command::Search { query };
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn brightness(value: i32) -> Result<Self, CommandError> {
        check_range(value, BRIGHTNESS_RANGE, "-100..=100")?;
        Ok(Command::AdjustBrightness { value })
    }

    pub fn contrast(value: i32) -> Result<Self, CommandError> {
        check_range(value, CONTRAST_RANGE, "0..=100")?;
        Ok(Command::AdjustContrast { value })
    }

    pub fn rotate(degrees: i32) -> Result<Self, CommandError> {
        check_range(degrees, ROTATE_RANGE, "0..=360")?;
        Ok(Command::Rotate { degrees })
    }

    pub fn color(color: ColorName, intensity: Intensity) -> Self {
        Command::AdjustColor { color, intensity }
    }

    /// Re-checks every argument invariant. Constructors already enforce these;
    /// this guards values built directly from the enum variants.
    pub fn validate(&self) -> Result<(), CommandError> {
        match self {
            Command::Search { query } => {
                if query.is_empty() {
                    return Err(CommandError::Arity {
                        command: SEARCH.into(),
                        detail: "query must contain at least one token".into(),
                    });
                }
                for token in query {
                    if !valid_query_token(token) {
                        return Err(CommandError::Syntax(format!("invalid query token `{token}`")));
                    }
                }
                Ok(())
            }
            Command::AdjustColor { intensity, .. } => {
                Intensity::from_millis(intensity.millis()).map(|_| ())
            }
            Command::AdjustBrightness { value } => check_range(*value, BRIGHTNESS_RANGE, "-100..=100"),
            Command::AdjustContrast { value } => check_range(*value, CONTRAST_RANGE, "0..=100"),
            Command::Rotate { degrees } => check_range(*degrees, ROTATE_RANGE, "0..=360"),
            Command::ImageCutout => Ok(()),
        }
    }

    /// Token form used by the model, without sentinels.
    pub fn to_tokens(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        match self {
            Command::Search { query } => {
                out.push(SEARCH.into());
                out.extend(query.iter().cloned());
            }
            Command::AdjustColor { color, intensity } => {
                out.push(ADJUST_COLOR.into());
                out.extend(color.tokens().iter().map(|t| t.to_string()));
                out.push(intensity.to_text());
            }
            Command::AdjustBrightness { value } => {
                out.extend([ADJUST_ATTR.into(), BRIGHTNESS.into(), value.to_string()]);
            }
            Command::AdjustContrast { value } => {
                out.extend([ADJUST_ATTR.into(), CONTRAST.into(), value.to_string()]);
            }
            Command::Rotate { degrees } => {
                out.extend([ROTATE.into(), degrees.to_string()]);
            }
            Command::ImageCutout => out.push(IMAGE_CUTOUT.into()),
        }
        out
    }

    /// Inverse of [`Command::to_tokens`]; applies the same validation as [`parse_command`].
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self, CommandError> {
        let Some((name, args)) = tokens.split_first() else {
            return Err(CommandError::Syntax("empty command".into()));
        };
        let name = name.as_ref();
        let arity = |detail: &str| CommandError::Arity {
            command: name.to_string(),
            detail: detail.to_string(),
        };
        match name {
            SEARCH => {
                if args.is_empty() {
                    return Err(arity("query must contain at least one token"));
                }
                Command::search(args.iter().map(|t| t.as_ref().to_lowercase()))
            }
            ADJUST_COLOR => {
                if args.is_empty() {
                    return Err(arity("expected a color and an intensity"));
                }
                let (color, used) = match ColorName::match_prefix(args) {
                    Some(m) => m,
                    None if args.len() == 1 => return Err(arity("expected a color and an intensity")),
                    None => {
                        let last = args.len() - 1;
                        let name: Vec<&str> = args[..last].iter().map(|t| t.as_ref()).collect();
                        return Err(CommandError::UnknownColor(name.join(" ")));
                    }
                };
                let rest = &args[used..];
                if rest.len() != 1 {
                    return Err(arity("expected exactly one intensity after the color"));
                }
                let intensity = Intensity::parse(rest[0].as_ref())?;
                Ok(Command::AdjustColor { color, intensity })
            }
            ADJUST_ATTR => {
                let Some((attr, values)) = args.split_first() else {
                    return Err(arity("expected an attribute and a value"));
                };
                let attr = attr.as_ref();
                if attr != BRIGHTNESS && attr != CONTRAST {
                    return Err(CommandError::UnknownCommand(format!("{ADJUST_ATTR} {attr}")));
                }
                if values.len() != 1 {
                    return Err(arity("expected exactly one value"));
                }
                let value = parse_int(values[0].as_ref())?;
                if attr == BRIGHTNESS {
                    Command::brightness(value)
                } else {
                    Command::contrast(value)
                }
            }
            ROTATE => {
                if args.len() != 1 {
                    return Err(arity("expected exactly one degree value"));
                }
                Command::rotate(parse_int(args[0].as_ref())?)
            }
            IMAGE_CUTOUT => {
                if !args.is_empty() {
                    return Err(arity("takes no arguments"));
                }
                Ok(Command::ImageCutout)
            }
            other => Err(CommandError::UnknownCommand(other.to_string())),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.to_tokens().join(" "))
    }
}

impl FromStr for Command {
    type Err = CommandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_command(s)
    }
}

impl Serialize for Command {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Command {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_command(&text).map_err(serde::de::Error::custom)
    }
}

/// Parses one bracketed command such as `[adjust_attr brightness 40]`.
pub fn parse_command(text: &str) -> Result<Command, CommandError> {
    let trimmed = text.trim();
    let inner = trimmed
        .strip_prefix('[')
        .and_then(|rest| rest.strip_suffix(']'))
        .ok_or_else(|| CommandError::Syntax(format!("expected `[name args...]`, got `{trimmed}`")))?;
    if inner.contains('[') || inner.contains(']') {
        return Err(CommandError::Syntax("nested or unbalanced brackets".into()));
    }
    let tokens: Vec<&str> = inner.split_whitespace().collect();
    Command::from_tokens(&tokens)
}

/// Canonical serializer; inverse of [`parse_command`].
pub fn format_command(cmd: &Command) -> String {
    cmd.to_string()
}

fn parse_int(text: &str) -> Result<i32, CommandError> {
    let digits = text.strip_prefix('-').unwrap_or(text);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CommandError::NonNumeric(text.to_string()));
    }
    // Anything too long for i32 is certainly out of every range.
    text.parse::<i32>().map_err(|_| CommandError::Range {
        value: text.to_string(),
        range: "i32",
    })
}

fn check_range(value: i32, (lo, hi): (i32, i32), label: &'static str) -> Result<(), CommandError> {
    if value < lo || value > hi {
        return Err(CommandError::Range {
            value: value.to_string(),
            range: label,
        });
    }
    Ok(())
}

fn valid_query_token(token: &str) -> bool {
    !token.is_empty()
        && !token.chars().any(|c| c.is_whitespace() || c == '[' || c == ']' || c.is_uppercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_paper_examples() {
        assert_eq!(
            parse_command("[search red scooter]").unwrap(),
            Command::search(["red", "scooter"]).unwrap()
        );
        assert_eq!(parse_command("[image_cutout]").unwrap(), Command::ImageCutout);
        assert_eq!(
            parse_command("[adjust_color sky blue 0.5]").unwrap(),
            Command::color(ColorName::SkyBlue, Intensity::from_millis(500).unwrap())
        );
        assert_eq!(parse_command("[rotate 400]").unwrap_err().class(), "RangeError");
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(
            format_command(&Command::brightness(40).unwrap()),
            "[adjust_attr brightness 40]"
        );
        assert_eq!(
            format_command(&Command::color(ColorName::Blue, Intensity::from_millis(1000).unwrap())),
            "[adjust_color blue 1.0]"
        );
        assert_eq!(
            format_command(&Command::search(["juice", "glass"]).unwrap()),
            "[search juice glass]"
        );
        assert_eq!(format_command(&Command::brightness(-30).unwrap()), "[adjust_attr brightness -30]");
    }

    #[test]
    fn whitespace_between_tokens_is_free() {
        assert_eq!(
            parse_command("  [ rotate    90 ]  ").unwrap(),
            Command::rotate(90).unwrap()
        );
    }

    #[test]
    fn command_names_are_case_sensitive() {
        assert_eq!(parse_command("[Rotate 90]").unwrap_err().class(), "UnknownCommand");
    }

    #[test]
    fn error_classes() {
        let cases = [
            ("[search]", "ArityError"),
            ("[rotate]", "ArityError"),
            ("[rotate 90 90]", "ArityError"),
            ("[image_cutout now]", "ArityError"),
            ("[adjust_color blue]", "ArityError"),
            ("[adjust_color teal 0.5]", "UnknownColor"),
            ("[adjust_color blue 1.5]", "RangeError"),
            ("[adjust_color blue -0.1]", "RangeError"),
            ("[adjust_color blue 0.1234]", "NonNumericArgument"),
            ("[adjust_attr brightness 101]", "RangeError"),
            ("[adjust_attr brightness -101]", "RangeError"),
            ("[adjust_attr contrast -1]", "RangeError"),
            ("[adjust_attr brightness ten]", "NonNumericArgument"),
            ("[adjust_attr brightness 4.5]", "NonNumericArgument"),
            ("[adjust_attr saturation 10]", "UnknownCommand"),
            ("[rotate 99999999999]", "RangeError"),
            ("[crop 10]", "UnknownCommand"),
            ("rotate 90", "SyntaxError"),
            ("[rotate [90]]", "SyntaxError"),
            ("[]", "SyntaxError"),
        ];
        for (text, class) in cases {
            assert_eq!(parse_command(text).unwrap_err().class(), class, "{text}");
        }
    }

    #[test]
    fn tokens_round_trip() {
        assert_eq!(Command::rotate(90).unwrap().to_tokens(), ["rotate", "90"]);
        assert_eq!(
            Command::from_tokens(&["adjust_color", "red", "0.5"]).unwrap(),
            Command::color(ColorName::Red, Intensity::from_millis(500).unwrap())
        );
        assert_eq!(
            Command::from_tokens(&["search"]).unwrap_err().class(),
            "ArityError"
        );
    }

    #[test]
    fn intensity_text() {
        for (millis, text) in [(0, "0.0"), (500, "0.5"), (1000, "1.0"), (125, "0.125"), (30, "0.03")] {
            let i = Intensity::from_millis(millis).unwrap();
            assert_eq!(i.to_text(), text);
            assert_eq!(Intensity::parse(text).unwrap(), i);
        }
        assert_eq!(Intensity::parse("1").unwrap().millis(), 1000);
        assert!(Intensity::parse("1.").is_err());
        assert!(Intensity::parse(".5").is_err());
    }

    #[test]
    fn sky_blue_is_greedy() {
        assert_eq!(ColorName::match_prefix(&["sky", "blue", "0.5"]), Some((ColorName::SkyBlue, 2)));
        assert_eq!(ColorName::match_prefix(&["blue", "sky"]), Some((ColorName::Blue, 1)));
        assert_eq!("sky blue".parse::<ColorName>().unwrap(), ColorName::SkyBlue);
        assert!("sky".parse::<ColorName>().is_err());
    }
}

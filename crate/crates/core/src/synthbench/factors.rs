//! Ground-truth factor enumerations for the synthetic benchmark.
//!
//! Subjects are fully determined by (shape, fill color, marker count);
//! scenes by (background color, texture, grid position, scale). Every
//! factor value carries a vocabulary word so prompts stay in the closed
//! grammar.

/// Subject silhouettes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubjectShape {
    Circle,
    Square,
    Triangle,
    Cross,
}

impl SubjectShape {
    pub const ALL: [SubjectShape; 4] =
        [SubjectShape::Circle, SubjectShape::Square, SubjectShape::Triangle, SubjectShape::Cross];

    pub fn word(self) -> &'static str {
        match self {
            SubjectShape::Circle => "circle",
            SubjectShape::Square => "square",
            SubjectShape::Triangle => "triangle",
            SubjectShape::Cross => "cross",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).unwrap()
    }
}

/// Saturated fill palette for subjects, disjoint from the backgrounds so a
/// subject never vanishes into its scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FillColor {
    Red,
    Green,
    Blue,
    Yellow,
    Magenta,
    Cyan,
    Orange,
    Purple,
}

impl FillColor {
    pub const ALL: [FillColor; 8] = [
        FillColor::Red,
        FillColor::Green,
        FillColor::Blue,
        FillColor::Yellow,
        FillColor::Magenta,
        FillColor::Cyan,
        FillColor::Orange,
        FillColor::Purple,
    ];

    pub fn word(self) -> &'static str {
        match self {
            FillColor::Red => "red",
            FillColor::Green => "green",
            FillColor::Blue => "blue",
            FillColor::Yellow => "yellow",
            FillColor::Magenta => "magenta",
            FillColor::Cyan => "cyan",
            FillColor::Orange => "orange",
            FillColor::Purple => "purple",
        }
    }

    /// RGB in [0, 1].
    pub fn rgb(self) -> [f64; 3] {
        match self {
            FillColor::Red => [1.0, 0.0, 0.0],
            FillColor::Green => [0.0, 0.85, 0.0],
            FillColor::Blue => [0.1, 0.1, 1.0],
            FillColor::Yellow => [1.0, 1.0, 0.0],
            FillColor::Magenta => [1.0, 0.0, 1.0],
            FillColor::Cyan => [0.0, 1.0, 1.0],
            FillColor::Orange => [1.0, 0.55, 0.0],
            FillColor::Purple => [0.6, 0.1, 0.95],
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }
}

/// Background palette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BgColor {
    White,
    Gray,
    Black,
    Brown,
    Pink,
    Teal,
    Navy,
    Olive,
}

impl BgColor {
    pub const ALL: [BgColor; 8] = [
        BgColor::White,
        BgColor::Gray,
        BgColor::Black,
        BgColor::Brown,
        BgColor::Pink,
        BgColor::Teal,
        BgColor::Navy,
        BgColor::Olive,
    ];

    pub fn word(self) -> &'static str {
        match self {
            BgColor::White => "white",
            BgColor::Gray => "gray",
            BgColor::Black => "black",
            BgColor::Brown => "brown",
            BgColor::Pink => "pink",
            BgColor::Teal => "teal",
            BgColor::Navy => "navy",
            BgColor::Olive => "olive",
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            BgColor::White => [1.0, 1.0, 1.0],
            BgColor::Gray => [0.5, 0.5, 0.5],
            BgColor::Black => [0.05, 0.05, 0.05],
            BgColor::Brown => [0.55, 0.27, 0.07],
            BgColor::Pink => [1.0, 0.75, 0.8],
            BgColor::Teal => [0.0, 0.5, 0.5],
            BgColor::Navy => [0.0, 0.0, 0.4],
            BgColor::Olive => [0.5, 0.5, 0.0],
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Texture {
    Plain,
    Stripes,
    Checker,
}

impl Texture {
    pub const ALL: [Texture; 3] = [Texture::Plain, Texture::Stripes, Texture::Checker];

    pub fn word(self) -> &'static str {
        match self {
            Texture::Plain => "plain",
            Texture::Stripes => "stripes",
            Texture::Checker => "checker",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubjectScale {
    Small,
    Medium,
}

impl SubjectScale {
    pub const ALL: [SubjectScale; 2] = [SubjectScale::Small, SubjectScale::Medium];

    pub fn word(self) -> &'static str {
        match self {
            SubjectScale::Small => "small",
            SubjectScale::Medium => "medium",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).unwrap()
    }
}

/// Vocabulary words for the nine grid positions, row-major.
pub const POSITION_WORDS: [&str; 9] = [
    "top-left",
    "top-center",
    "top-right",
    "middle-left",
    "middle-center",
    "middle-right",
    "bottom-left",
    "bottom-center",
    "bottom-right",
];

/// Appearance of one subject; closed enumerations only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubjectSpec {
    pub shape: SubjectShape,
    pub fill: FillColor,
    /// Number of small interior identity markers, 0..=3.
    pub markers: u8,
}

/// Identity-irrelevant rendering factors of one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SceneSpec {
    pub bg: BgColor,
    pub texture: Texture,
    /// Grid cell 0..9, row-major.
    pub position: u8,
    pub scale: SubjectScale,
}

impl SceneSpec {
    pub fn position_word(&self) -> &'static str {
        POSITION_WORDS[self.position as usize]
    }
}

/// Every scene in canonical enumeration order
/// (bg, then texture, then position, then scale).
pub fn all_scenes() -> Vec<SceneSpec> {
    let mut out = Vec::with_capacity(8 * 3 * 9 * 2);
    for bg in BgColor::ALL {
        for texture in Texture::ALL {
            for position in 0..9u8 {
                for scale in SubjectScale::ALL {
                    out.push(SceneSpec { bg, texture, position, scale });
                }
            }
        }
    }
    out
}

/// The benchmark's default subject inventory: four subjects, pairwise
/// distinct in every subject factor that admits it.
pub fn default_subjects() -> [SubjectSpec; 4] {
    [
        SubjectSpec { shape: SubjectShape::Circle, fill: FillColor::Red, markers: 1 },
        SubjectSpec { shape: SubjectShape::Square, fill: FillColor::Blue, markers: 2 },
        SubjectSpec { shape: SubjectShape::Triangle, fill: FillColor::Yellow, markers: 3 },
        SubjectSpec { shape: SubjectShape::Cross, fill: FillColor::Cyan, markers: 0 },
    ]
}

use std::fmt;

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub x: u8,
    pub y: u8,
}

impl Pos {
    pub const fn new(x: u8, y: u8) -> Self {
        Pos { x, y }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ObjectKind {
    Sushi,
    Vase,
    Box,
}

/// Static description of a grid.
///
/// Legend: `#` wall, `A` agent, `G` goal, `>` belt cell, `S` sushi on a belt
/// cell, `V` vase on a belt cell, `X` box, `O` off-switch cell, space floor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    pub width: u8,
    pub height: u8,
    walls: Vec<bool>,
    /// Belt cells ordered left to right.
    pub belt: Vec<Pos>,
    pub goal: Option<Pos>,
    pub agent: Pos,
    pub object: Option<(ObjectKind, Pos)>,
    pub switch: Option<Pos>,
}

pub const SUSHI: &str = "\
#######
#   A #
#>>>S>#
#     #
#  G  #
#######
";

pub const VASE: &str = "\
#######
#  A  #
#>V>> #
#     #
#     #
#######
";

pub const BOX: &str = "\
######
# A###
# X  #
##   #
### G#
######
";

pub const SURVIVAL: &str = "\
#######
#     #
# AOG #
#     #
#######
";

impl GridLayout {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::Layout("empty layout".into()));
        }
        let width = rows[0].chars().count();
        if rows.iter().any(|r| r.chars().count() != width) {
            return Err(Error::Layout("rows have different lengths".into()));
        }
        if width > u8::MAX as usize || rows.len() > u8::MAX as usize {
            return Err(Error::Layout("layout too large".into()));
        }
        let height = rows.len();
        let mut walls = vec![false; width * height];
        let mut belt = Vec::new();
        let mut goal = None;
        let mut agent = None;
        let mut object = None;
        let mut switch = None;

        let mut place_object = |kind, p: Pos| -> Result<()> {
            if object.replace((kind, p)).is_some() {
                return Err(Error::Layout("at most one object is supported".into()));
            }
            Ok(())
        };

        for (y, row) in rows.iter().enumerate() {
            for (x, c) in row.chars().enumerate() {
                let p = Pos::new(x as u8, y as u8);
                match c {
                    '#' => walls[y * width + x] = true,
                    ' ' | '.' => {}
                    'A' => {
                        if agent.replace(p).is_some() {
                            return Err(Error::Layout("more than one agent".into()));
                        }
                    }
                    'G' => {
                        if goal.replace(p).is_some() {
                            return Err(Error::Layout("more than one goal".into()));
                        }
                    }
                    'O' => {
                        if switch.replace(p).is_some() {
                            return Err(Error::Layout("more than one off switch".into()));
                        }
                    }
                    '>' => belt.push(p),
                    'S' => {
                        belt.push(p);
                        place_object(ObjectKind::Sushi, p)?;
                    }
                    'V' => {
                        belt.push(p);
                        place_object(ObjectKind::Vase, p)?;
                    }
                    'X' => place_object(ObjectKind::Box, p)?,
                    other => {
                        return Err(Error::Layout(format!(
                            "unknown cell `{other}` at ({x},{y})"
                        )))
                    }
                }
            }
        }

        let agent = agent.ok_or_else(|| Error::Layout("no agent cell".into()))?;
        belt.sort_by_key(|p| (p.y, p.x));
        if let Some(first) = belt.first() {
            let contiguous = belt
                .iter()
                .enumerate()
                .all(|(i, p)| p.y == first.y && p.x as usize == first.x as usize + i);
            if !contiguous {
                return Err(Error::Layout(
                    "belt cells must form one contiguous horizontal segment".into(),
                ));
            }
        }
        Ok(GridLayout {
            width: width as u8,
            height: height as u8,
            walls,
            belt,
            goal,
            agent,
            object,
            switch,
        })
    }

    pub fn is_wall(&self, p: Pos) -> bool {
        p.x >= self.width
            || p.y >= self.height
            || self.walls[p.y as usize * self.width as usize + p.x as usize]
    }

    pub fn belt_index(&self, p: Pos) -> Option<usize> {
        let first = self.belt.first()?;
        if p.y != first.y || p.x < first.x {
            return None;
        }
        let i = (p.x - first.x) as usize;
        (i < self.belt.len()).then_some(i)
    }

    /// A box here has a wall on a vertical side and on a horizontal side,
    /// so it can never be pushed again along at least one axis pair.
    pub fn is_corner(&self, p: Pos) -> bool {
        let wall = |dx: i8, dy: i8| match offset(p, dx, dy) {
            Some(q) => self.is_wall(q),
            None => true,
        };
        (wall(0, -1) || wall(0, 1)) && (wall(-1, 0) || wall(1, 0))
    }
}

pub(crate) fn offset(p: Pos, dx: i8, dy: i8) -> Option<Pos> {
    let x = p.x as i16 + dx as i16;
    let y = p.y as i16 + dy as i16;
    if x < 0 || y < 0 || x > u8::MAX as i16 || y > u8::MAX as i16 {
        None
    } else {
        Some(Pos::new(x as u8, y as u8))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for text in [SUSHI, VASE, BOX, SURVIVAL] {
            let l = GridLayout::parse(text).unwrap();
            assert!(!l.is_wall(l.agent));
        }
        let sushi = GridLayout::parse(SUSHI).unwrap();
        assert_eq!(sushi.belt.len(), 5);
        assert_eq!(sushi.object, Some((ObjectKind::Sushi, Pos::new(4, 2))));
        assert_eq!(sushi.belt_index(Pos::new(4, 2)), Some(3));
        assert_eq!(sushi.belt_index(Pos::new(2, 3)), None);
    }

    #[test]
    fn rejects_broken_belts_and_bad_cells() {
        assert!(GridLayout::parse("#####\n#A> >#\n#####\n").is_err());
        assert!(GridLayout::parse("####\n#A?#\n####\n").is_err());
        assert!(GridLayout::parse("####\n#  #\n####\n").is_err());
        assert!(GridLayout::parse("####\n#AX X#\n####\n").is_err());
    }

    #[test]
    fn box_corners() {
        let l = GridLayout::parse(BOX).unwrap();
        assert!(l.is_corner(Pos::new(2, 3)));
        assert!(l.is_corner(Pos::new(4, 2)));
        assert!(!l.is_corner(Pos::new(3, 2)));
        assert!(!l.is_corner(Pos::new(2, 2)));
    }
}

/// Splits one class file into method-like units with a brace-depth
/// heuristic.
///
/// A unit starts at the first line of a member declaration at class-member
/// depth (depth 1) whose text contains a parenthesised parameter list before
/// the opening `{`, and ends on the line where that brace closes. Nested
/// blocks and anonymous classes stay inside their enclosing unit. If no unit
/// is found, or braces do not balance, the whole file is the only unit.
pub fn segment_methods(class_source: &str) -> Vec<String> {
    if class_source.is_empty() {
        return Vec::new();
    }
    let lines: Vec<&str> = class_source.lines().collect();
    let whole = || vec![class_source.to_owned()];

    let mut depth: i64 = 0;
    // first line of the declaration being accumulated at member depth
    let mut pending: Option<usize> = None;
    let mut pending_has_params = false;
    let mut open_unit: Option<usize> = None;
    let mut units: Vec<(usize, usize)> = Vec::new();
    let mut scanner = Scanner::default();

    for (idx, line) in lines.iter().enumerate() {
        for c in scanner.code_chars(line) {
            match c {
                '{' => {
                    if depth == 1 && open_unit.is_none() {
                        if pending.is_some() && pending_has_params {
                            open_unit = pending;
                        }
                        pending = None;
                        pending_has_params = false;
                    }
                    depth += 1;
                }
                '}' => {
                    depth -= 1;
                    if depth < 0 {
                        return whole();
                    }
                    if depth == 1 {
                        if let Some(start) = open_unit.take() {
                            units.push((start, idx));
                        }
                        pending = None;
                        pending_has_params = false;
                    }
                }
                ';' if depth == 1 && open_unit.is_none() => {
                    pending = None;
                    pending_has_params = false;
                }
                ')' if depth == 1 && open_unit.is_none() && pending.is_some() => {
                    pending_has_params = true;
                }
                c if depth == 1 && open_unit.is_none() && !c.is_whitespace() => {
                    if pending.is_none() {
                        pending = Some(idx);
                    }
                }
                _ => {}
            }
        }
    }

    if depth != 0 || open_unit.is_some() || units.is_empty() {
        return whole();
    }
    units
        .into_iter()
        .map(|(start, end)| lines[start..=end].join("\n"))
        .collect()
}

/// Strips string/char literals and comments so braces inside them are not
/// counted. Block-comment state carries across lines.
#[derive(Default)]
struct Scanner {
    in_block_comment: bool,
}

impl Scanner {
    fn code_chars(&mut self, line: &str) -> Vec<char> {
        let chars: Vec<char> = line.chars().collect();
        let mut out = Vec::with_capacity(chars.len());
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let next = chars.get(i + 1).copied();
            if self.in_block_comment {
                if c == '*' && next == Some('/') {
                    self.in_block_comment = false;
                    i += 2;
                } else {
                    i += 1;
                }
                continue;
            }
            match (c, next) {
                ('/', Some('/')) => break,
                ('/', Some('*')) => {
                    self.in_block_comment = true;
                    i += 2;
                }
                ('"', _) | ('\'', _) => {
                    let quote = c;
                    i += 1;
                    while i < chars.len() && chars[i] != quote {
                        if chars[i] == '\\' {
                            i += 1;
                        }
                        i += 1;
                    }
                    i += 1;
                    out.push(' ');
                }
                _ => {
                    out.push(c);
                    i += 1;
                }
            }
        }
        out
    }
}

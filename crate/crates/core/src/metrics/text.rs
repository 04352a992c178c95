//! Text-level helpers: edit distance, number scanning, canonical forms.

/// Levenshtein distance over unicode scalar values, classic O(n*m) rolling
/// row. Symmetric by definition.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Canonical decimal form: strip leading zeros and trailing fractional
/// zeros, so "018", "18.0" and "18.000" all compare equal as "18".
pub fn canonical_number(s: &str) -> String {
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    let int_trimmed = int_part.trim_start_matches('0');
    let int_norm = if int_trimmed.is_empty() { "0" } else { int_trimmed };
    let frac_trimmed = frac_part.trim_end_matches('0');
    let mut out = String::new();
    let is_zero = int_norm == "0" && frac_trimmed.is_empty();
    if neg && !is_zero {
        out.push('-');
    }
    out.push_str(int_norm);
    if !frac_trimmed.is_empty() {
        out.push('.');
        out.push_str(frac_trimmed);
    }
    out
}

/// All maximal numeric literals in `text` (optional leading minus, digits,
/// optional single decimal point), in order of appearance, canonicalized.
pub fn scan_numbers(text: &str) -> Vec<String> {
    // hand-rolled scan: a minus counts only when directly attached to digits
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let neg = chars[i] == '-'
            && i + 1 < chars.len()
            && chars[i + 1].is_ascii_digit()
            // "3-4" is two numbers and an operator, not "3" and "-4"
            && (i == 0 || !chars[i - 1].is_ascii_digit());
        let start = if neg { i + 1 } else { i };
        if start < chars.len() && chars[start].is_ascii_digit() {
            let mut j = start;
            let mut seen_dot = false;
            while j < chars.len() {
                if chars[j].is_ascii_digit() {
                    j += 1;
                } else if chars[j] == '.' && !seen_dot && j + 1 < chars.len() && chars[j + 1].is_ascii_digit() {
                    seen_dot = true;
                    j += 1;
                } else {
                    break;
                }
            }
            let lit: String = chars[i..j].iter().collect();
            out.push(canonical_number(&lit));
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

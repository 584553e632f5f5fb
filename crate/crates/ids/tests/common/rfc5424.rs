//! Strict parser for the RFC 5424 message grammar (section 6 ABNF).

#![allow(dead_code)]

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub pri: u8,
    pub version: u32,
    pub timestamp: String,
    pub hostname: String,
    pub app_name: String,
    pub procid: String,
    pub msgid: String,
    pub sd: Vec<(String, Vec<(String, String)>)>,
    pub msg: Option<String>,
}

struct Cursor<'a> {
    s: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.at).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), String> {
        if self.peek() == Some(c) {
            self.at += 1;
            Ok(())
        } else {
            Err(format!("expected {:?} at byte {}", c as char, self.at))
        }
    }

    fn digits(&mut self, min: usize, max: usize) -> Result<&'a str, String> {
        let start = self.at;
        while self.at - start < max && self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.at += 1;
        }
        if self.at - start < min {
            return Err(format!("expected {min} digits at byte {start}"));
        }
        Ok(std::str::from_utf8(&self.s[start..self.at]).unwrap())
    }

    /// 1*max PRINTUSASCII (33..=126).
    fn token(&mut self, max: usize, what: &str) -> Result<String, String> {
        let start = self.at;
        while self.peek().is_some_and(|c| (33..=126).contains(&c)) {
            self.at += 1;
        }
        let len = self.at - start;
        if len == 0 || len > max {
            return Err(format!("{what} has length {len} (1..={max})"));
        }
        Ok(String::from_utf8(self.s[start..self.at].to_vec()).unwrap())
    }
}

fn timestamp(c: &mut Cursor) -> Result<String, String> {
    let start = c.at;
    if c.peek() == Some(b'-') {
        c.at += 1;
        return Ok("-".into());
    }
    let year = c.digits(4, 4)?;
    let _ = year;
    c.expect(b'-')?;
    let month: u32 = c.digits(2, 2)?.parse().unwrap();
    c.expect(b'-')?;
    let day: u32 = c.digits(2, 2)?.parse().unwrap();
    c.expect(b'T')?;
    let hour: u32 = c.digits(2, 2)?.parse().unwrap();
    c.expect(b':')?;
    let minute: u32 = c.digits(2, 2)?.parse().unwrap();
    c.expect(b':')?;
    let second: u32 = c.digits(2, 2)?.parse().unwrap();
    if c.peek() == Some(b'.') {
        c.at += 1;
        c.digits(1, 6)?;
    }
    match c.peek() {
        Some(b'Z') => c.at += 1,
        Some(b'+') | Some(b'-') => {
            c.at += 1;
            c.digits(2, 2)?;
            c.expect(b':')?;
            c.digits(2, 2)?;
        }
        _ => return Err("missing time offset".into()),
    }
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) || hour > 23 || minute > 59 || second > 59 {
        return Err("timestamp field out of range".into());
    }
    Ok(String::from_utf8(c.s[start..c.at].to_vec()).unwrap())
}

fn sd_name(c: &mut Cursor) -> Result<String, String> {
    let start = c.at;
    while c.peek().is_some_and(|b| (33..=126).contains(&b) && !matches!(b, b'=' | b']' | b'"')) {
        c.at += 1;
    }
    let len = c.at - start;
    if len == 0 || len > 32 {
        return Err(format!("SD-NAME length {len} at byte {start}"));
    }
    Ok(String::from_utf8(c.s[start..c.at].to_vec()).unwrap())
}

fn param_value(c: &mut Cursor) -> Result<String, String> {
    c.expect(b'"')?;
    let mut out = Vec::new();
    loop {
        match c.peek() {
            None => return Err("unterminated PARAM-VALUE".into()),
            Some(b'"') => {
                c.at += 1;
                break;
            }
            Some(b'\\') => {
                let next = c.s.get(c.at + 1).copied();
                if matches!(next, Some(b'"' | b'\\' | b']')) {
                    out.push(next.unwrap());
                    c.at += 2;
                } else {
                    out.push(b'\\');
                    c.at += 1;
                }
            }
            Some(b']') => return Err("unescaped ] in PARAM-VALUE".into()),
            Some(b) => {
                out.push(b);
                c.at += 1;
            }
        }
    }
    String::from_utf8(out).map_err(|_| "PARAM-VALUE is not UTF-8".into())
}

pub fn parse(line: &str) -> Result<Message, String> {
    let mut c = Cursor { s: line.as_bytes(), at: 0 };
    c.expect(b'<')?;
    let pri: u32 = c.digits(1, 3)?.parse().unwrap();
    if pri > 191 {
        return Err(format!("PRI {pri} out of range"));
    }
    c.expect(b'>')?;
    if !c.peek().is_some_and(|b| (b'1'..=b'9').contains(&b)) {
        return Err("VERSION must start with a non-zero digit".into());
    }
    let version: u32 = c.digits(1, 3)?.parse().unwrap();
    c.expect(b' ')?;
    let timestamp = timestamp(&mut c)?;
    c.expect(b' ')?;
    let hostname = c.token(255, "HOSTNAME")?;
    c.expect(b' ')?;
    let app_name = c.token(48, "APP-NAME")?;
    c.expect(b' ')?;
    let procid = c.token(128, "PROCID")?;
    c.expect(b' ')?;
    let msgid = c.token(32, "MSGID")?;
    c.expect(b' ')?;
    let mut sd = Vec::new();
    if c.peek() == Some(b'-') {
        c.at += 1;
    } else {
        while c.peek() == Some(b'[') {
            c.at += 1;
            let id = sd_name(&mut c)?;
            let mut params = Vec::new();
            while c.peek() == Some(b' ') {
                c.at += 1;
                let name = sd_name(&mut c)?;
                c.expect(b'=')?;
                params.push((name, param_value(&mut c)?));
            }
            c.expect(b']')?;
            sd.push((id, params));
        }
        if sd.is_empty() {
            return Err("STRUCTURED-DATA missing".into());
        }
    }
    let msg = match c.peek() {
        None => None,
        Some(b' ') => Some(String::from_utf8(c.s[c.at + 1..].to_vec()).map_err(|_| "MSG not UTF-8")?),
        Some(_) => return Err(format!("unexpected byte after STRUCTURED-DATA at {}", c.at)),
    };
    if msg.as_deref().is_some_and(|m| m.contains('\n')) {
        return Err("MSG contains a line break".into());
    }
    Ok(Message { pri: pri as u8, version, timestamp, hostname, app_name, procid, msgid, sd, msg })
}

#[test]
fn checker_accepts_rfc_examples_and_rejects_junk() {
    assert!(parse("<34>1 2003-10-11T22:14:15.003Z mymachine.example.com su - ID47 - 'su root' failed").is_ok());
    assert!(parse(r#"<165>1 2003-10-11T22:14:15.003Z mymachine.example.com evntslog - ID47 [exampleSDID@32473 iut="3" eventSource="Application" eventID="1011"] An application event"#).is_ok());
    assert!(parse("<192>1 - - - - - -").is_err());
    assert!(parse("<13>0 - - - - - -").is_err());
    assert!(parse("<13>1 2003-13-11T22:14:15Z h a - - -").is_err());
    assert!(parse("<13>1 - h a - - [x a=\"]\"]").is_err());
}

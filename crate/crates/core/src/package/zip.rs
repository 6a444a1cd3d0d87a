//! Minimal canonical ZIP codec.
//!
//! Only one shape of archive is written or accepted: stored (method 0)
//! entries, zeroed DOS timestamps, UTF-8 names flagged with general purpose
//! bit 11, no extra fields, no comments, entries laid out contiguously in
//! strictly increasing byte order of their names, central directory directly
//! after the last entry and the end-of-central-directory record at the very
//! end. Anything else is rejected as malformed, so every header byte is
//! covered by a structural check and every data byte by CRC-32.

use std::collections::BTreeMap;

const LOCAL_SIG: u32 = 0x0403_4b50;
const CENTRAL_SIG: u32 = 0x0201_4b50;
const EOCD_SIG: u32 = 0x0605_4b50;

#[cfg(test)]
const LOCAL_HEADER_LEN: usize = 30;
const CENTRAL_HEADER_LEN: usize = 46;
const EOCD_LEN: usize = 22;

const VERSION_MADE_BY: u16 = 20;
const VERSION_NEEDED: u16 = 10;
const FLAG_UTF8: u16 = 0x0800;

/// One decoded archive member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZipEntry<'a> {
    pub name: &'a str,
    pub data: &'a [u8],
    /// Whether the stored CRC-32 matches the data.
    pub crc_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ZipError(pub String);

fn malformed(msg: impl Into<String>) -> ZipError {
    ZipError(msg.into())
}

/// Writes `entries` as a canonical archive. The map order is the archive
/// order.
pub fn write_archive(entries: &BTreeMap<String, Vec<u8>>) -> Result<Vec<u8>, ZipError> {
    if entries.len() > u16::MAX as usize {
        return Err(malformed("too many entries"));
    }
    let mut out = Vec::new();
    let mut central = Vec::new();
    for (name, data) in entries {
        if name.is_empty() || name.len() > u16::MAX as usize {
            return Err(malformed(format!("invalid entry name length for {name:?}")));
        }
        let offset = u32::try_from(out.len()).map_err(|_| malformed("archive exceeds 4 GiB"))?;
        let size = u32::try_from(data.len()).map_err(|_| malformed("entry exceeds 4 GiB"))?;
        let crc = crc32fast::hash(data);

        put_u32(&mut out, LOCAL_SIG);
        put_common(&mut out, crc, size, name.len() as u16);
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(data);

        put_u32(&mut central, CENTRAL_SIG);
        put_u16(&mut central, VERSION_MADE_BY);
        put_common(&mut central, crc, size, name.len() as u16);
        put_u16(&mut central, 0); // comment length
        put_u16(&mut central, 0); // disk number start
        put_u16(&mut central, 0); // internal attributes
        put_u32(&mut central, 0); // external attributes
        put_u32(&mut central, offset);
        central.extend_from_slice(name.as_bytes());
    }
    let cd_offset = u32::try_from(out.len()).map_err(|_| malformed("archive exceeds 4 GiB"))?;
    let cd_size = central.len() as u32;
    out.extend_from_slice(&central);

    put_u32(&mut out, EOCD_SIG);
    put_u16(&mut out, 0);
    put_u16(&mut out, 0);
    put_u16(&mut out, entries.len() as u16);
    put_u16(&mut out, entries.len() as u16);
    put_u32(&mut out, cd_size);
    put_u32(&mut out, cd_offset);
    put_u16(&mut out, 0);
    Ok(out)
}

/// Fields shared by local and central headers, from "version needed" through
/// "extra field length".
fn put_common(buf: &mut Vec<u8>, crc: u32, size: u32, name_len: u16) {
    put_u16(buf, VERSION_NEEDED);
    put_u16(buf, FLAG_UTF8);
    put_u16(buf, 0); // method: stored
    put_u16(buf, 0); // mod time
    put_u16(buf, 0); // mod date
    put_u32(buf, crc);
    put_u32(buf, size); // compressed
    put_u32(buf, size); // uncompressed
    put_u16(buf, name_len);
    put_u16(buf, 0); // extra length
}

fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], pos: usize) -> Self {
        Self { buf, pos }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ZipError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| malformed(format!("unexpected end of archive at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ZipError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, ZipError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn expect_u16(&mut self, want: u16, what: &str) -> Result<(), ZipError> {
        let at = self.pos;
        let got = self.u16()?;
        if got != want {
            return Err(malformed(format!("{what} at offset {at}: expected {want:#x}, found {got:#x}")));
        }
        Ok(())
    }

    fn expect_u32(&mut self, want: u32, what: &str) -> Result<(), ZipError> {
        let at = self.pos;
        let got = self.u32()?;
        if got != want {
            return Err(malformed(format!("{what} at offset {at}: expected {want:#x}, found {got:#x}")));
        }
        Ok(())
    }
}

struct CommonFields {
    crc: u32,
    size: u32,
    name_len: u16,
}

fn read_common(cur: &mut Cursor<'_>) -> Result<CommonFields, ZipError> {
    cur.expect_u16(VERSION_NEEDED, "version needed")?;
    cur.expect_u16(FLAG_UTF8, "general purpose flags")?;
    cur.expect_u16(0, "compression method")?;
    cur.expect_u16(0, "modification time")?;
    cur.expect_u16(0, "modification date")?;
    let crc = cur.u32()?;
    let compressed = cur.u32()?;
    let size = cur.u32()?;
    if compressed != size {
        return Err(malformed("compressed and uncompressed sizes differ"));
    }
    let name_len = cur.u16()?;
    cur.expect_u16(0, "extra field length")?;
    Ok(CommonFields { crc, size, name_len })
}

/// Decodes a canonical archive. Structural deviations are errors; CRC
/// mismatches are reported per entry.
pub fn read_archive(bytes: &[u8]) -> Result<Vec<ZipEntry<'_>>, ZipError> {
    if bytes.len() < EOCD_LEN {
        return Err(malformed("too short to hold an end-of-central-directory record"));
    }
    let eocd_at = bytes.len() - EOCD_LEN;
    let mut eocd = Cursor::new(bytes, eocd_at);
    eocd.expect_u32(EOCD_SIG, "end-of-central-directory signature")?;
    eocd.expect_u16(0, "disk number")?;
    eocd.expect_u16(0, "central directory disk")?;
    let count = eocd.u16()?;
    eocd.expect_u16(count, "total entry count")?;
    let cd_size = eocd.u32()? as usize;
    let cd_offset = eocd.u32()? as usize;
    eocd.expect_u16(0, "archive comment length")?;
    if cd_offset.checked_add(cd_size) != Some(eocd_at) {
        return Err(malformed("central directory does not end at the end-of-central-directory record"));
    }

    if cd_size < count as usize * CENTRAL_HEADER_LEN {
        return Err(malformed("central directory too small for its entry count"));
    }

    let mut entries = Vec::with_capacity(count as usize);
    let mut central = Cursor::new(bytes, cd_offset);
    let mut next_local = 0usize;
    let mut prev_name: Option<&str> = None;
    for _ in 0..count {
        central.expect_u32(CENTRAL_SIG, "central header signature")?;
        central.expect_u16(VERSION_MADE_BY, "version made by")?;
        let common = read_common(&mut central)?;
        central.expect_u16(0, "file comment length")?;
        central.expect_u16(0, "disk number start")?;
        central.expect_u16(0, "internal attributes")?;
        central.expect_u32(0, "external attributes")?;
        let local_offset = central.u32()? as usize;
        let name_bytes = central.take(common.name_len as usize)?;
        let name = std::str::from_utf8(name_bytes).map_err(|_| malformed("entry name is not UTF-8"))?;
        if name.is_empty() {
            return Err(malformed("empty entry name"));
        }
        if let Some(prev) = prev_name {
            if prev >= name {
                return Err(malformed(format!("entry {name:?} out of order or duplicated")));
            }
        }
        prev_name = Some(name);

        if local_offset != next_local {
            return Err(malformed(format!("entry {name:?} is not contiguous with its predecessor")));
        }
        let mut local = Cursor::new(bytes, local_offset);
        local.expect_u32(LOCAL_SIG, "local header signature")?;
        let local_common = read_common(&mut local)?;
        if local_common.crc != common.crc
            || local_common.size != common.size
            || local_common.name_len != common.name_len
        {
            return Err(malformed(format!("local header of {name:?} disagrees with central directory")));
        }
        if local.take(common.name_len as usize)? != name_bytes {
            return Err(malformed(format!("local name of {name:?} disagrees with central directory")));
        }
        let data = local.take(common.size as usize)?;
        next_local = local.pos;
        if next_local > cd_offset {
            return Err(malformed(format!("entry {name:?} overlaps the central directory")));
        }
        entries.push(ZipEntry {
            name,
            data,
            crc_ok: crc32fast::hash(data) == common.crc,
        });
    }
    if central.pos != eocd_at {
        return Err(malformed("central directory size disagrees with its entries"));
    }
    if next_local != cd_offset {
        return Err(malformed("gap between last entry and central directory"));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BTreeMap<String, Vec<u8>> {
        let mut m = BTreeMap::new();
        m.insert("a.txt".to_string(), b"hello".to_vec());
        m.insert("dir/b.bin".to_string(), vec![0u8, 1, 2, 255]);
        m
    }

    #[test]
    fn round_trip() {
        let bytes = write_archive(&sample()).unwrap();
        let entries = read_archive(&bytes).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].name, "a.txt");
        assert_eq!(entries[0].data, b"hello");
        assert!(entries.iter().all(|e| e.crc_ok));
    }

    #[test]
    fn empty_archive_is_just_eocd() {
        let bytes = write_archive(&BTreeMap::new()).unwrap();
        assert_eq!(bytes.len(), EOCD_LEN);
        assert!(read_archive(&bytes).unwrap().is_empty());
    }

    #[test]
    fn truncation_is_malformed() {
        let bytes = write_archive(&sample()).unwrap();
        for cut in [0, 1, bytes.len() / 2, bytes.len() - 1] {
            assert!(read_archive(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn data_flip_is_crc_failure_not_structural() {
        let mut bytes = write_archive(&sample()).unwrap();
        // first entry data starts after its 30-byte header and 5-byte name
        bytes[LOCAL_HEADER_LEN + 5] ^= 0x01;
        let entries = read_archive(&bytes).unwrap();
        assert!(!entries[0].crc_ok);
        assert!(entries[1].crc_ok);
    }

    #[test]
    fn every_header_byte_is_checked() {
        let bytes = write_archive(&sample()).unwrap();
        let a_data = LOCAL_HEADER_LEN + 5..LOCAL_HEADER_LEN + 10;
        let b_start = LOCAL_HEADER_LEN + 10;
        let b_data = b_start + LOCAL_HEADER_LEN + 9..b_start + LOCAL_HEADER_LEN + 13;
        for i in 0..bytes.len() {
            if a_data.contains(&i) || b_data.contains(&i) {
                continue;
            }
            let mut m = bytes.clone();
            m[i] ^= 0x20;
            let detected = match read_archive(&m) {
                Err(_) => true,
                Ok(es) => es.iter().any(|e| !e.crc_ok) || es.len() != 2,
            };
            assert!(detected, "mutation at offset {i} went unnoticed");
        }
    }

    #[test]
    fn rejects_unsorted_names() {
        let mut bytes = write_archive(&sample()).unwrap();
        // swap name "a.txt" -> "z.txt" in both local and central headers
        let local_name = LOCAL_HEADER_LEN;
        bytes[local_name] = b'z';
        let central_start = bytes.len() - EOCD_LEN - (2 * CENTRAL_HEADER_LEN + 5 + 9);
        bytes[central_start + CENTRAL_HEADER_LEN] = b'z';
        assert!(read_archive(&bytes).is_err());
    }
}

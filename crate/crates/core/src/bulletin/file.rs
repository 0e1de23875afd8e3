//! Single-file board.
//!
//! Layout: the 8-byte magic `PPTPBRD1`, then each entry as a `u32`
//! big-endian length followed by the entry encoding
//! `index u64 ‖ kind u8 ‖ cycle u64 ‖ period u64 ‖ payload (u32 len ‖ bytes)
//! ‖ has_sig u8 ‖ [sig 64] ‖ prev_hash 32 ‖ entry_hash 32`.
//!
//! Every operation re-reads the file under an advisory lock (exclusive for
//! appends, shared for reads), so several processes can share one board.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{first_bad_entry, seal, AppendRequest, Board, BoardError, BoardPolicy, BulletinEntry};
use crate::codec::{Reader, Writer};

pub const MAGIC: &[u8; 8] = b"PPTPBRD1";

#[derive(Debug)]
pub struct FileBoard {
    path: PathBuf,
    policy: BoardPolicy,
}

impl FileBoard {
    /// Opens `path`, creating an empty board if it does not exist.
    pub fn open(path: impl AsRef<Path>, policy: BoardPolicy) -> Result<Self, BoardError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)?;
        file.lock()?;
        if file.metadata()?.len() == 0 {
            file.write_all(MAGIC)?;
            file.sync_data()?;
        }
        file.unlock()?;
        let board = FileBoard { path, policy };
        board.read_all()?;
        Ok(board)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn load(file: &mut File) -> Result<Vec<BulletinEntry>, BoardError> {
        let mut bytes = Vec::new();
        file.seek(SeekFrom::Start(0))?;
        file.read_to_end(&mut bytes)?;
        parse_file(&bytes)
    }
}

/// Decodes a board file without checking the chain.
pub fn parse_file(bytes: &[u8]) -> Result<Vec<BulletinEntry>, BoardError> {
    let mut r = Reader::new(bytes);
    if r.take(MAGIC.len())
        .map_err(|_| BoardError::Malformed("missing header".into()))?
        != MAGIC
    {
        return Err(BoardError::Malformed("bad magic".into()));
    }
    let mut entries = Vec::new();
    while r.remaining() > 0 {
        let record = r.var()?;
        let mut er = Reader::new(record);
        let entry = BulletinEntry::read(&mut er)?;
        er.finish()?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Reads a board file and checks the whole chain.
pub fn verify_file(path: impl AsRef<Path>) -> Result<u64, BoardError> {
    let bytes = std::fs::read(path)?;
    let entries = parse_file(&bytes)?;
    match first_bad_entry(&entries) {
        Some(i) => Err(BoardError::Corrupted(i)),
        None => Ok(entries.len() as u64),
    }
}

impl Board for FileBoard {
    fn append(&self, req: AppendRequest) -> Result<u64, BoardError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(&self.path)?;
        file.lock()?;
        let result = (|| {
            let entries = Self::load(&mut file)?;
            if let Some(i) = first_bad_entry(&entries) {
                return Err(BoardError::Corrupted(i));
            }
            self.policy.admit(&entries, &req)?;
            let entry = seal(&entries, req);
            let mut w = Writer::new();
            w.var(&entry.to_bytes());
            file.write_all(&w.finish())?;
            file.sync_data()?;
            Ok(entry.index)
        })();
        file.unlock()?;
        result
    }

    fn read_range(&self, from: u64, to: u64) -> Result<Vec<BulletinEntry>, BoardError> {
        let mut file = File::open(&self.path)?;
        file.lock_shared()?;
        let entries = Self::load(&mut file);
        file.unlock()?;
        let entries = entries?;
        let len = entries.len() as u64;
        let (from, to) = (from.min(len) as usize, to.min(len) as usize);
        Ok(entries[from..to.max(from)].to_vec())
    }

    fn len(&self) -> Result<u64, BoardError> {
        Ok(self.read_all()?.len() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bulletin::EntryKind;
    use crate::crypto::SigKeyPair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn persists_across_handles_and_detects_mutation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("board.bin");
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let kp = SigKeyPair::generate(&mut rng);
        {
            let b = FileBoard::open(&path, BoardPolicy::open()).unwrap();
            for p in 0..3 {
                b.append(AppendRequest::signed(
                    &kp,
                    EntryKind::Digest,
                    0,
                    p,
                    &[7; 32],
                ))
                .unwrap();
            }
        }
        let b = FileBoard::open(&path, BoardPolicy::open()).unwrap();
        assert_eq!(b.len().unwrap(), 3);
        assert_eq!(b.read_range(1, 2).unwrap()[0].period, 1);
        assert_eq!(verify_file(&path).unwrap(), 3);

        let clean = std::fs::read(&path).unwrap();
        for _ in 0..50 {
            let mut bytes = clean.clone();
            let pos = rng.gen_range(0..bytes.len());
            bytes[pos] ^= 1 << rng.gen_range(0..8);
            std::fs::write(&path, &bytes).unwrap();
            assert!(verify_file(&path).is_err(), "byte {pos}");
        }
        std::fs::write(&path, &clean).unwrap();
        assert!(verify_file(&path).is_ok());
    }

    #[test]
    fn corrupted_file_refuses_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("board.bin");
        let kp = SigKeyPair::generate(&mut ChaCha20Rng::seed_from_u64(2));
        let b = FileBoard::open(&path, BoardPolicy::open()).unwrap();
        b.append(AppendRequest::signed(
            &kp,
            EntryKind::Digest,
            0,
            0,
            &[1; 32],
        ))
        .unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(
            b.append(AppendRequest::signed(
                &kp,
                EntryKind::Digest,
                0,
                1,
                &[1; 32]
            )),
            Err(BoardError::Corrupted(0))
        );
    }
}

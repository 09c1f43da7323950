//! Bounded, closable single-producer/single-consumer channels.
//!
//! A channel carries [`Item`]s: either serialized in-memory values or file
//! sets. Files are copied into a channel-owned staging directory
//! (`<root>/<channel-id>/<seq>/`) before the item is enqueued, and moved
//! into the receiver's directory on receipt, so a receiver never sees a
//! partially written file set.
//!
//! Closing is absorbing and idempotent. After close, senders fail with
//! [`ChannelError::Closed`]; receivers drain whatever is still queued and
//! then get [`ChannelError::ClosedAndEmpty`].

use std::collections::VecDeque;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use crate::graph::PortType;
use crate::signal::{StopSignal, CANCEL_CHECK_INTERVAL};

pub const FILE_SET: &str = "file-set";

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("channel closed")]
    Closed,
    #[error("channel closed and drained")]
    ClosedAndEmpty,
    #[error("cancelled by stop signal")]
    Cancelled,
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("staging failed: {0}")]
    StagingFull(#[source] io::Error),
    #[error("staged files missing at {0}")]
    StagingCorrupt(PathBuf),
    #[error("payload mode mismatch: {0}")]
    PayloadMode(String),
    #[error("duplicate file name {0:?} in one file set")]
    DuplicateFileName(String),
}

impl ChannelError {
    /// Closure / cancellation signals, as opposed to genuine failures.
    pub fn is_shutdown_signal(&self) -> bool {
        matches!(
            self,
            ChannelError::Closed | ChannelError::ClosedAndEmpty | ChannelError::Cancelled
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileSet {
    pub dir: PathBuf,
    pub names: Vec<String>,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Bytes(Vec<u8>),
    Files(FileSet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub type_tag: PortType,
    pub payload: Payload,
}

impl Item {
    pub fn bytes(type_tag: PortType, bytes: Vec<u8>) -> Self {
        Item {
            type_tag,
            payload: Payload::Bytes(bytes),
        }
    }
}

/// Generation counter a receiver can block on while watching several
/// channels at once.
#[derive(Debug, Default)]
pub struct Wakeup {
    generation: Mutex<u64>,
    cv: Condvar,
}

impl Wakeup {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn notify(&self) {
        let mut g = self.generation.lock().unwrap();
        *g += 1;
        self.cv.notify_all();
    }

    pub fn generation(&self) -> u64 {
        *self.generation.lock().unwrap()
    }

    /// Blocks until the generation moves past `seen` or `timeout` elapses.
    pub fn wait_past(&self, seen: u64, timeout: Duration) {
        let g = self.generation.lock().unwrap();
        if *g != seen {
            return;
        }
        let _ = self.cv.wait_timeout_while(g, timeout, |g| *g == seen).unwrap();
    }
}

#[derive(Debug, Default)]
struct State {
    queue: VecDeque<Item>,
    closed: bool,
    sent: u64,
    received: u64,
    next_seq: u64,
    max_queued: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelStats {
    pub sent: u64,
    pub received: u64,
    pub queued: usize,
    pub max_queued: usize,
    pub closed: bool,
}

#[derive(Debug)]
pub struct Channel {
    id: String,
    capacity: usize,
    port_type: PortType,
    staging_root: Option<PathBuf>,
    cancel: Option<StopSignal>,
    rx_wakeup: Option<Arc<Wakeup>>,
    state: Mutex<State>,
    not_empty: Condvar,
    not_full: Condvar,
}

impl Channel {
    pub fn new(id: impl Into<String>, capacity: usize, port_type: PortType) -> Self {
        assert!(capacity > 0, "channel capacity must be positive");
        Channel {
            id: id.into(),
            capacity,
            port_type,
            staging_root: None,
            cancel: None,
            rx_wakeup: None,
            state: Mutex::new(State::default()),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
        }
    }

    /// Root under which file sets are staged (`<root>/<id>/<seq>/`).
    pub fn with_staging(mut self, root: impl Into<PathBuf>) -> Self {
        self.staging_root = Some(root.into());
        self
    }

    /// Blocking operations give up with `Cancelled` once `signal` is set.
    pub fn with_cancel(mut self, signal: StopSignal) -> Self {
        self.cancel = Some(signal);
        self
    }

    /// Extra wakeup poked on every send and close, for multi-input waits.
    pub fn with_receiver_wakeup(mut self, wakeup: Arc<Wakeup>) -> Self {
        self.rx_wakeup = Some(wakeup);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn port_type(&self) -> &PortType {
        &self.port_type
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap()
    }

    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(StopSignal::is_set)
    }

    fn wake_receiver(&self) {
        self.not_empty.notify_all();
        if let Some(w) = &self.rx_wakeup {
            w.notify();
        }
    }

    fn accepts_files(&self) -> bool {
        match &self.port_type {
            PortType::Any => true,
            PortType::Tag(t) => t == FILE_SET,
        }
    }

    pub fn send(&self, item: Item) -> Result<(), ChannelError> {
        self.send_observed(item, &mut || {})
    }

    /// Like [`Channel::send`]; `on_block` runs once if the call has to wait
    /// for space.
    pub fn send_observed(
        &self,
        item: Item,
        on_block: &mut dyn FnMut(),
    ) -> Result<(), ChannelError> {
        let mut st = self.lock();
        let mut announced = false;
        loop {
            if st.closed {
                return Err(ChannelError::Closed);
            }
            if st.queue.len() < self.capacity {
                st.queue.push_back(item);
                st.sent += 1;
                st.max_queued = st.max_queued.max(st.queue.len());
                drop(st);
                self.wake_receiver();
                return Ok(());
            }
            if self.cancelled() {
                return Err(ChannelError::Cancelled);
            }
            if !announced {
                announced = true;
                on_block();
            }
            st = self.not_full.wait_timeout(st, CANCEL_CHECK_INTERVAL).unwrap().0;
        }
    }

    /// Sends serialized bytes tagged with the channel's type.
    pub fn send_bytes(&self, bytes: Vec<u8>) -> Result<(), ChannelError> {
        if matches!(&self.port_type, PortType::Tag(t) if t == FILE_SET) {
            return Err(ChannelError::PayloadMode(format!(
                "{} carries file sets only",
                self.id
            )));
        }
        self.send(Item::bytes(self.port_type.clone(), bytes))
    }

    pub fn receive(&self) -> Result<Item, ChannelError> {
        self.receive_observed(&mut || {})
    }

    /// Like [`Channel::receive`]; `on_block` runs once if the call has to
    /// wait for an item.
    pub fn receive_observed(&self, on_block: &mut dyn FnMut()) -> Result<Item, ChannelError> {
        let mut st = self.lock();
        let mut announced = false;
        loop {
            if let Some(item) = st.queue.pop_front() {
                st.received += 1;
                drop(st);
                self.not_full.notify_all();
                return Ok(item);
            }
            if st.closed {
                return Err(ChannelError::ClosedAndEmpty);
            }
            if self.cancelled() {
                return Err(ChannelError::Cancelled);
            }
            if !announced {
                announced = true;
                on_block();
            }
            st = self.not_empty.wait_timeout(st, CANCEL_CHECK_INTERVAL).unwrap().0;
        }
    }

    /// Non-blocking receive. `Ok(None)` when open and empty.
    pub fn try_receive(&self) -> Result<Option<Item>, ChannelError> {
        let mut st = self.lock();
        match st.queue.pop_front() {
            Some(item) => {
                st.received += 1;
                drop(st);
                self.not_full.notify_all();
                Ok(Some(item))
            }
            None if st.closed => Err(ChannelError::ClosedAndEmpty),
            None => Ok(None),
        }
    }

    pub fn close(&self) {
        let mut st = self.lock();
        if st.closed {
            return;
        }
        st.closed = true;
        drop(st);
        self.not_full.notify_all();
        self.wake_receiver();
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Closed with nothing left to receive.
    pub fn is_drained(&self) -> bool {
        let st = self.lock();
        st.closed && st.queue.is_empty()
    }

    pub fn queued(&self) -> usize {
        self.lock().queue.len()
    }

    pub fn stats(&self) -> ChannelStats {
        let st = self.lock();
        ChannelStats {
            sent: st.sent,
            received: st.received,
            queued: st.queue.len(),
            max_queued: st.max_queued,
            closed: st.closed,
        }
    }

    /// Monotone counter that changes whenever anything moves on the channel.
    pub fn activity(&self) -> u64 {
        let st = self.lock();
        st.sent + st.received + u64::from(st.closed)
    }

    /// Copies `files` into a fresh staging directory, then enqueues them as
    /// one item. The originals are left untouched.
    pub fn send_files(&self, files: &[PathBuf]) -> Result<(), ChannelError> {
        self.send_files_observed(files, &mut || {})
    }

    pub fn send_files_observed(
        &self,
        files: &[PathBuf],
        on_block: &mut dyn FnMut(),
    ) -> Result<(), ChannelError> {
        if !self.accepts_files() {
            return Err(ChannelError::PayloadMode(format!(
                "{} carries {} values, not files",
                self.id, self.port_type
            )));
        }
        let root = self.staging_root.as_ref().ok_or_else(|| {
            ChannelError::PayloadMode(format!("{} has no staging area", self.id))
        })?;
        let mut names: Vec<String> = Vec::with_capacity(files.len());
        for f in files {
            if !f.is_file() {
                return Err(ChannelError::MissingFile(f.clone()));
            }
            let name = f
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .ok_or_else(|| ChannelError::MissingFile(f.clone()))?;
            if names.contains(&name) {
                return Err(ChannelError::DuplicateFileName(name));
            }
            names.push(name);
        }
        if self.lock().closed {
            return Err(ChannelError::Closed);
        }
        let seq = {
            let mut st = self.lock();
            st.next_seq += 1;
            st.next_seq
        };
        let dir = root.join(&self.id).join(seq.to_string());
        let staged = fs::create_dir_all(&dir).and_then(|_| {
            files
                .iter()
                .zip(&names)
                .try_for_each(|(src, name)| fs::copy(src, dir.join(name)).map(|_| ()))
        });
        if let Err(e) = staged {
            let _ = fs::remove_dir_all(&dir);
            return Err(ChannelError::StagingFull(e));
        }
        let item = Item {
            type_tag: PortType::tag(FILE_SET),
            payload: Payload::Files(FileSet {
                dir: dir.clone(),
                names,
                seq,
            }),
        };
        self.send_observed(item, on_block).inspect_err(|_| {
            let _ = fs::remove_dir_all(&dir);
        })
    }

    /// Receives a file set and moves it under `dest_root`, returning paths
    /// owned by the caller.
    pub fn receive_files(&self, dest_root: &Path) -> Result<Vec<PathBuf>, ChannelError> {
        let item = self.receive()?;
        match item.payload {
            Payload::Files(set) => self.claim_files(set, dest_root),
            Payload::Bytes(_) => Err(ChannelError::PayloadMode(format!(
                "{} delivered a value where files were expected",
                self.id
            ))),
        }
    }

    /// Moves a staged file set out of the staging area: an atomic rename
    /// on the same filesystem, copy + delete otherwise.
    pub fn claim_files(&self, set: FileSet, dest_root: &Path) -> Result<Vec<PathBuf>, ChannelError> {
        if !set.dir.is_dir() {
            return Err(ChannelError::StagingCorrupt(set.dir));
        }
        fs::create_dir_all(dest_root).map_err(ChannelError::StagingFull)?;
        let target = dest_root.join(format!("{}-{}", self.id, set.seq));
        if target.exists() {
            fs::remove_dir_all(&target).map_err(ChannelError::StagingFull)?;
        }
        if fs::rename(&set.dir, &target).is_err() {
            copy_dir(&set.dir, &target).map_err(ChannelError::StagingFull)?;
            let _ = fs::remove_dir_all(&set.dir);
        }
        let paths: Vec<PathBuf> = set.names.iter().map(|n| target.join(n)).collect();
        if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
            return Err(ChannelError::StagingCorrupt(missing.clone()));
        }
        Ok(paths)
    }
}

fn copy_dir(src: &Path, dst: &Path) -> io::Result<()> {
    fs::create_dir_all(dst)?;
    for entry in fs::read_dir(src)? {
        let entry = entry?;
        let to = dst.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &to)?;
        } else {
            fs::copy(entry.path(), to)?;
        }
    }
    Ok(())
}

//! Multi-view image sequences on disk.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.txt           key=value: frames, views, width, height, test_views, background, gt_samples
//! poses.txt              one line per view: fx fy cx cy, then the 3x4 world-from-camera matrix row-major
//! images/tFFFF_vVV.ppm   one P6 image per frame and view
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nvv_core::eval::EvalSource;
use nvv_core::render::{Camera, Image};
use nvv_core::scene::{oracle_render, BlobScene, Rig};
use nvv_core::train::{FrameSource, FrameViews, View};

use crate::error::{Error, Result};
use crate::ppm::{read_ppm, write_ppm};

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub frames: usize,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub test_views: Vec<usize>,
    pub background: [f64; 3],
    pub gt_samples: usize,
}

/// Parse `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(path, format!("line {}: expected key=value", i + 1)));
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    if s.trim().is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Manifest {
    pub fn to_text(&self) -> String {
        format!(
            "frames={}\nviews={}\nwidth={}\nheight={}\ntest_views={}\nbackground={}\ngt_samples={}\n",
            self.frames,
            self.views,
            self.width,
            self.height,
            join(&self.test_views),
            join(&self.background),
            self.gt_samples
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let kv = parse_key_values(text, path)?;
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::parse(path, format!("missing key {}", k)));
        let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::parse(path, format!("bad value for {}", k))) };
        let test_views: Vec<usize> = parse_list(get("test_views")?).ok_or_else(|| Error::parse(path, "bad test_views"))?;
        let bg: Vec<f64> = parse_list(get("background")?).ok_or_else(|| Error::parse(path, "bad background"))?;
        let m = Manifest {
            frames: int("frames")?,
            views: int("views")?,
            width: int("width")?,
            height: int("height")?,
            test_views,
            background: bg.try_into().map_err(|_| Error::parse(path, "background needs three values"))?,
            gt_samples: int("gt_samples")?,
        };
        if m.test_views.iter().any(|v| *v >= m.views) || m.test_views.len() >= m.views {
            return Err(Error::parse(path, "test views must be distinct from at least one train view and in range"));
        }
        Ok(m)
    }

    pub fn train_views(&self) -> Vec<usize> {
        (0..self.views).filter(|v| !self.test_views.contains(v)).collect()
    }
}

pub fn poses_text(cams: &[Camera]) -> String {
    let mut s = String::new();
    for c in cams {
        let r = &c.rotation;
        let t = &c.translation;
        let vals = [
            c.fx, c.fy, c.cx, c.cy, r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1], r[2][2], t[2],
        ];
        let _ = writeln!(s, "{}", vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
    }
    s
}

pub fn parse_poses(text: &str, width: usize, height: usize, path: &Path) -> Result<Vec<Camera>> {
    let mut cams = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, format!("line {}: not a number", i + 1)))?;
        if v.len() != 16 {
            return Err(Error::parse(path, format!("line {}: expected 16 numbers, found {}", i + 1, v.len())));
        }
        let rot = [[v[4], v[5], v[6]], [v[8], v[9], v[10]], [v[12], v[13], v[14]]];
        let cam = Camera::new([v[0], v[1], v[2], v[3]], rot, [v[7], v[11], v[15]], width, height)
            .map_err(|e| Error::parse(path, format!("line {}: {}", i + 1, e)))?;
        cams.push(cam);
    }
    Ok(cams)
}

fn image_name(frame: usize, view: usize) -> String {
    format!("t{:04}_v{:02}.ppm", frame, view)
}

/// An opened dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub cameras: Vec<Camera>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let mpath = root.join("manifest.txt");
        let manifest = Manifest::parse(&fs::read_to_string(&mpath).map_err(Error::io(&mpath))?, &mpath)?;
        let ppath = root.join("poses.txt");
        let text = fs::read_to_string(&ppath).map_err(Error::io(&ppath))?;
        let cameras = parse_poses(&text, manifest.width, manifest.height, &ppath)?;
        if cameras.len() != manifest.views {
            return Err(Error::parse(&ppath, format!("{} poses for {} views", cameras.len(), manifest.views)));
        }
        Ok(Self { root: root.to_path_buf(), manifest, cameras })
    }

    pub fn image_path(&self, frame: usize, view: usize) -> PathBuf {
        self.root.join("images").join(image_name(frame, view))
    }

    pub fn image(&self, frame: usize, view: usize) -> Result<Image> {
        if frame >= self.manifest.frames || view >= self.manifest.views {
            return Err(Error::Usage(format!("no frame {} view {} in {}", frame, view, self.root.display())));
        }
        let img = read_ppm(&self.image_path(frame, view))?;
        if img.width != self.manifest.width || img.height != self.manifest.height {
            return Err(Error::parse(&self.image_path(frame, view), "image size differs from the manifest"));
        }
        Ok(img)
    }

    pub fn views(&self, frame: usize, which: &[usize]) -> Result<Vec<View>> {
        which.iter().map(|&v| Ok(View { camera: self.cameras[v], image: self.image(frame, v)? })).collect()
    }

    /// The same dataset restricted to its first `frames` frames.
    pub fn truncated(&self, frames: usize) -> Self {
        let mut d = self.clone();
        d.manifest.frames = frames.min(self.manifest.frames);
        d
    }
}

fn to_core(e: Error) -> nvv_core::Error {
    match e {
        Error::Core(c) => c,
        Error::Parse { .. } => nvv_core::Error::Format(e.to_string()),
        other => nvv_core::Error::Config(other.to_string()),
    }
}

impl FrameSource for Dataset {
    fn frame_count(&self) -> usize {
        self.manifest.frames
    }

    fn train_views(&self, frame: usize) -> nvv_core::Result<FrameViews> {
        Ok(FrameViews { views: self.views(frame, &self.manifest.train_views()).map_err(to_core)? })
    }
}

impl EvalSource for Dataset {
    fn frame_count(&self) -> usize {
        self.manifest.frames
    }

    fn eval_views(&self, frame: usize) -> nvv_core::Result<(Vec<View>, Vec<View>)> {
        let train = self.views(frame, &self.manifest.train_views()).map_err(to_core)?;
        let test = self.views(frame, &self.manifest.test_views).map_err(to_core)?;
        Ok((train, test))
    }
}

/// Render every frame and view of `scene` into `dir`; the last `test_count`
/// views are held out.
pub fn make_dataset(scene: &BlobScene, rig: &Rig, test_count: usize, gt_samples: usize, dir: &Path) -> Result<Dataset> {
    let cameras = rig.cameras()?;
    if test_count >= cameras.len() {
        return Err(Error::Usage(format!("{} test views leave no training view out of {}", test_count, cameras.len())));
    }
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(Error::io(&images))?;
    let manifest = Manifest {
        frames: scene.frames,
        views: cameras.len(),
        width: rig.width,
        height: rig.height,
        test_views: (cameras.len() - test_count..cameras.len()).collect(),
        background: scene.background,
        gt_samples,
    };
    for t in 0..scene.frames {
        for (v, cam) in cameras.iter().enumerate() {
            write_ppm(&images.join(image_name(t, v)), &oracle_render(scene, cam, t, gt_samples))?;
        }
        log::debug!("rendered frame {}", t);
    }
    let ppath = dir.join("poses.txt");
    fs::write(&ppath, poses_text(&cameras)).map_err(Error::io(&ppath))?;
    let mpath = dir.join("manifest.txt");
    fs::write(&mpath, manifest.to_text()).map_err(Error::io(&mpath))?;
    Dataset::open(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scene(frames: usize) -> BlobScene {
        BlobScene::acceptance(frames)
    }

    #[test]
    fn writes_expected_files_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let rig = Rig { views: 3, ..Rig::acceptance(8) };
        let ds = make_dataset(&small_scene(2), &rig, 1, 32, dir.path()).unwrap();
        let n = fs::read_dir(dir.path().join("images")).unwrap().count();
        assert_eq!(n, 6);
        assert_eq!(ds.manifest.train_views(), vec![0, 1]);
        assert_eq!(ds.manifest.test_views, vec![2]);
        assert_eq!(ds.cameras, rig.cameras().unwrap());
        let img = ds.image(1, 2).unwrap();
        let want = oracle_render(&small_scene(2), &rig.cameras().unwrap()[2], 1, 32);
        assert_eq!(img.to_rgb8(), want.to_rgb8());
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let rig = Rig { views: 3, ..Rig::acceptance(6) };
        make_dataset(&small_scene(2), &rig, 1, 16, a.path()).unwrap();
        make_dataset(&small_scene(2), &rig, 1, 16, b.path()).unwrap();
        for name in ["manifest.txt", "poses.txt", "images/t0001_v02.ppm", "images/t0000_v00.ppm"] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
        }
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let m = Manifest { frames: 4, views: 5, width: 7, height: 9, test_views: vec![3, 4], background: [1.0, 0.5, 0.0], gt_samples: 256 };
        let p = Path::new("m");
        assert_eq!(Manifest::parse(&m.to_text(), p).unwrap(), m);
        let bad = m.to_text().replace("test_views=3,4", "test_views=3,9");
        assert!(matches!(Manifest::parse(&bad, p), Err(Error::Parse { .. })));
        assert!(Manifest::parse("frames=1\n", p).is_err());
    }

    #[test]
    fn missing_files_report_their_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = Dataset::open(dir.path()).unwrap_err();
        assert!(err.to_string().contains("manifest.txt"));
        assert_eq!(err.exit_code(), 1);
    }
}

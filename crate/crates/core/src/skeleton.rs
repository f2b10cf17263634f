//! Joint topology shared by every stage of the pipeline.
//!
//! A skeleton is a rooted tree stored as a parent table. The root joint is its
//! own parent. Optional per-bone length ranges and rest directions are only
//! consumed by the synthetic scene generator.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_JOINTS: usize = 64;

/// Length range and rest direction of the bone that ends at a joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneSpec {
    pub min_mm: f64,
    pub max_mm: f64,
    /// Direction from the parent joint in an upright, camera-facing rest pose
    /// (x right, y down, z away from the camera). Need not be normalized.
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SkeletonConfig {
    names: Vec<String>,
    parents: Vec<usize>,
    root: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bones: Option<Vec<Option<BoneSpec>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonConfig", into = "SkeletonConfig")]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<usize>,
    root: usize,
    bones: Option<Vec<Option<BoneSpec>>>,
    depth: Vec<usize>,
}

impl TryFrom<SkeletonConfig> for Skeleton {
    type Error = Error;

    fn try_from(c: SkeletonConfig) -> Result<Self> {
        let mut s = Skeleton::new(c.names, c.parents, c.root)?;
        if let Some(bones) = c.bones {
            s = s.with_bones(bones)?;
        }
        Ok(s)
    }
}

impl From<Skeleton> for SkeletonConfig {
    fn from(s: Skeleton) -> Self {
        SkeletonConfig {
            names: s.names,
            parents: s.parents,
            root: s.root,
            bones: s.bones,
        }
    }
}

impl Skeleton {
    pub fn new(names: Vec<String>, parents: Vec<usize>, root: usize) -> Result<Self> {
        let k = parents.len();
        if k == 0 || k > MAX_JOINTS {
            return Err(Error::InvalidSkeleton(format!(
                "joint count {k} outside 1..={MAX_JOINTS}"
            )));
        }
        if names.len() != k {
            return Err(Error::InvalidSkeleton(format!(
                "{} names for {k} joints",
                names.len()
            )));
        }
        if root >= k {
            return Err(Error::InvalidSkeleton(format!("root {root} out of range")));
        }
        if parents[root] != root {
            return Err(Error::InvalidSkeleton("root must be its own parent".into()));
        }
        for (j, &p) in parents.iter().enumerate() {
            if p >= k {
                return Err(Error::InvalidSkeleton(format!(
                    "joint {j} has parent {p} out of range"
                )));
            }
            if j != root && p == j {
                return Err(Error::InvalidSkeleton(format!(
                    "joint {j} is its own parent but is not the root"
                )));
            }
        }

        let mut depth = vec![usize::MAX; k];
        depth[root] = 0;
        for j in 0..k {
            // walk up until a joint of known depth; more than k steps means a cycle
            let mut chain = Vec::new();
            let mut cur = j;
            while depth[cur] == usize::MAX {
                chain.push(cur);
                if chain.len() > k {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {j} does not reach the root"
                    )));
                }
                cur = parents[cur];
            }
            let mut d = depth[cur];
            for &c in chain.iter().rev() {
                d += 1;
                depth[c] = d;
            }
        }

        Ok(Skeleton {
            names,
            parents,
            root,
            bones: None,
            depth,
        })
    }

    pub fn with_bones(mut self, bones: Vec<Option<BoneSpec>>) -> Result<Self> {
        if bones.len() != self.joint_count() {
            return Err(Error::InvalidSkeleton(format!(
                "{} bone entries for {} joints",
                bones.len(),
                self.joint_count()
            )));
        }
        for (j, b) in bones.iter().enumerate() {
            if let Some(b) = b {
                let norm = b.direction.iter().map(|v| v * v).sum::<f64>();
                if !(b.min_mm > 0.0 && b.min_mm <= b.max_mm) || !(norm > 0.0) {
                    return Err(Error::InvalidSkeleton(format!("bad bone spec for joint {j}")));
                }
            }
        }
        self.bones = Some(bones);
        Ok(self)
    }

    /// The default 16-joint body: head top, neck, shoulders, elbows, wrists,
    /// hips, knees, ankles, spine and pelvis (root).
    pub fn default_body() -> Self {
        const J: [(&str, usize, f64, f64, [f64; 3]); 16] = [
            ("head_top", 1, 180.0, 240.0, [0.0, -1.0, 0.0]),
            ("neck", 14, 200.0, 280.0, [0.0, -1.0, 0.0]),
            ("l_shoulder", 1, 140.0, 200.0, [1.0, 0.15, 0.0]),
            ("r_shoulder", 1, 140.0, 200.0, [-1.0, 0.15, 0.0]),
            ("l_elbow", 2, 250.0, 320.0, [0.0, 1.0, 0.0]),
            ("r_elbow", 3, 250.0, 320.0, [0.0, 1.0, 0.0]),
            ("l_wrist", 4, 220.0, 290.0, [0.0, 1.0, 0.0]),
            ("r_wrist", 5, 220.0, 290.0, [0.0, 1.0, 0.0]),
            ("l_hip", 15, 90.0, 140.0, [1.0, 0.0, 0.0]),
            ("r_hip", 15, 90.0, 140.0, [-1.0, 0.0, 0.0]),
            ("l_knee", 8, 380.0, 460.0, [0.0, 1.0, 0.0]),
            ("r_knee", 9, 380.0, 460.0, [0.0, 1.0, 0.0]),
            ("l_ankle", 10, 360.0, 440.0, [0.0, 1.0, 0.0]),
            ("r_ankle", 11, 360.0, 440.0, [0.0, 1.0, 0.0]),
            ("spine", 15, 200.0, 280.0, [0.0, -1.0, 0.0]),
            ("pelvis", 15, 0.0, 0.0, [0.0, 0.0, 0.0]),
        ];
        let names = J.iter().map(|j| j.0.to_string()).collect();
        let parents = J.iter().map(|j| j.1).collect();
        let bones = J
            .iter()
            .enumerate()
            .map(|(i, j)| {
                (i != 15).then_some(BoneSpec {
                    min_mm: j.2,
                    max_mm: j.3,
                    direction: j.4,
                })
            })
            .collect();
        Skeleton::new(names, parents, 15)
            .and_then(|s| s.with_bones(bones))
            .expect("default skeleton is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn root_index(&self) -> usize {
        self.root
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent(&self, joint: usize) -> usize {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn bone(&self, joint: usize) -> Option<&BoneSpec> {
        self.bones.as_ref().and_then(|b| b[joint].as_ref())
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let k = self.joint_count();
        let mut children = vec![Vec::new(); k];
        for j in 0..k {
            if j != self.root {
                children[self.parents[j]].push(j);
            }
        }
        let mut order = Vec::with_capacity(k);
        let mut queue = VecDeque::from([self.root]);
        while let Some(j) = queue.pop_front() {
            order.push(j);
            queue.extend(children[j].iter().copied());
        }
        order
    }

    fn check(&self, joint: usize) -> Result<()> {
        if joint >= self.joint_count() {
            return Err(Error::IndexOutOfRange {
                index: joint,
                count: self.joint_count(),
            });
        }
        Ok(())
    }

    /// Number of edges on the tree path between joints `i` and `j`.
    pub fn hop_distance(&self, i: usize, j: usize) -> Result<usize> {
        self.check(i)?;
        self.check(j)?;
        let (mut a, mut b) = (i, j);
        let mut hops = 0;
        while self.depth[a] > self.depth[b] {
            a = self.parents[a];
            hops += 1;
        }
        while self.depth[b] > self.depth[a] {
            b = self.parents[b];
            hops += 1;
        }
        while a != b {
            a = self.parents[a];
            b = self.parents[b];
            hops += 2;
        }
        Ok(hops)
    }
}

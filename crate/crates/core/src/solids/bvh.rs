use nalgebra::Point3;

use super::Aabb;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    // Leaf: range into `order`; inner: child node indices.
    start: u32,
    end: u32,
    leaf: bool,
}

/// Median-split bounding volume hierarchy over element boxes.
#[derive(Debug, Clone)]
pub(crate) struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh {
    pub(crate) fn build(boxes: &[Aabb]) -> Self {
        let mut order: Vec<u32> = (0..boxes.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1);
        if !boxes.is_empty() {
            Self::build_node(boxes, &mut order, 0, boxes.len(), &mut nodes);
        }
        Self { nodes, order }
    }

    fn build_node(
        boxes: &[Aabb],
        order: &mut [u32],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let bbox = order[start..end]
            .iter()
            .fold(Aabb::empty(), |acc, &i| acc.union(&boxes[i as usize]));
        let index = nodes.len();
        nodes.push(Node {
            bbox,
            start: start as u32,
            end: end as u32,
            leaf: true,
        });
        if end - start <= LEAF_SIZE {
            return index;
        }
        let extent = bbox.max - bbox.min;
        let axis = extent.imax();
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            let ca = boxes[a as usize].center()[axis];
            let cb = boxes[b as usize].center()[axis];
            ca.total_cmp(&cb)
        });
        let left = Self::build_node(boxes, order, start, mid, nodes);
        let right = Self::build_node(boxes, order, mid, end, nodes);
        nodes[index].leaf = false;
        nodes[index].start = left as u32;
        nodes[index].end = right as u32;
        index
    }

    /// Minimum of `dist2(element)` over all elements, pruning by box distance.
    pub(crate) fn nearest<F: Fn(usize) -> f64>(&self, p: &Point3<f64>, dist2: F) -> f64 {
        let mut best = f64::INFINITY;
        if self.nodes.is_empty() {
            return best;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bbox.distance_squared(p) >= best {
                continue;
            }
            if node.leaf {
                for &e in &self.order[node.start as usize..node.end as usize] {
                    best = best.min(dist2(e as usize));
                }
            } else {
                let (l, r) = (node.start as usize, node.end as usize);
                let dl = self.nodes[l].bbox.distance_squared(p);
                let dr = self.nodes[r].bbox.distance_squared(p);
                // Visit the closer child first.
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }
}

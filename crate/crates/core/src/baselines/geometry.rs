use crate::{Error, Result};

/// Axis-aligned box in pixel units with positive area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) || ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::Argument(format!(
                "box ({x0},{y0},{x1},{y1}) must have x0<x1, y0<y1"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Intersection over the area of `b`.
pub fn ioa(b: &BBox, r: &BBox) -> f64 {
    (b.intersection_area(r) / b.area()).clamp(0.0, 1.0)
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    (inter / (a.area() + b.area() - inter)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn ioa_examples() {
        assert_eq!(ioa(&bx(0.0, 0.0, 5.0, 10.0), &bx(0.0, 0.0, 10.0, 10.0)), 1.0);
        assert_eq!(ioa(&bx(0.0, 0.0, 1.0, 1.0), &bx(2.0, 2.0, 3.0, 3.0)), 0.0);
        assert_eq!(ioa(&bx(0.0, 0.0, 4.0, 4.0), &bx(2.0, 2.0, 6.0, 6.0)), 0.25);
        // touching edges share no area
        assert_eq!(ioa(&bx(0.0, 0.0, 1.0, 1.0), &bx(1.0, 0.0, 2.0, 1.0)), 0.0);
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&bx(0.0, 0.0, 4.0, 4.0), &bx(2.0, 2.0, 6.0, 6.0)), 4.0 / 28.0);
        assert_eq!(iou(&bx(1.0, 1.0, 3.0, 3.0), &bx(1.0, 1.0, 3.0, 3.0)), 1.0);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50i32..50, -50i32..50, 1i32..40, 1i32..40)
            .prop_map(|(x, y, w, h)| bx(x as f64, y as f64, (x + w) as f64, (y + h) as f64))
    }

    proptest! {
        #[test]
        fn ioa_properties(b in arb_box(), r in arb_box(), dx in -20i32..20, dy in -20i32..20) {
            let v = ioa(&b, &r);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(ioa(&b, &b), 1.0);
            let shift = |q: &BBox| bx(q.x0 + dx as f64, q.y0 + dy as f64, q.x1 + dx as f64, q.y1 + dy as f64);
            prop_assert_eq!(ioa(&shift(&b), &shift(&r)), v);
            prop_assert!(iou(&b, &r) <= v.max(ioa(&r, &b)) + 1e-15);
        }
    }
}

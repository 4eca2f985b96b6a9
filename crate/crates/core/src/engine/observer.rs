use super::Event;
use crate::metrics::StageHitRecord;

/// Aggregate occupancy shared by every simulator state.
pub trait Occupancy {
    /// Number of distinct packets present.
    fn distinct(&self) -> usize;
    /// Sum over present packets of `N - stage`.
    fn undelivered(&self) -> u64;
    /// Arrival time of the oldest present packet.
    fn oldest_arrival(&self) -> Option<f64>;
}

/// Hooks invoked by the simulators. All methods default to no-ops.
///
/// For every event the simulator first reports the interval over which the
/// pre-event state was held, then applies the event and reports it together
/// with the post-event state.
pub trait Observer<S: ?Sized> {
    fn start(&mut self, _time: f64, _state: &S) {}
    fn interval(&mut self, _from: f64, _to: f64, _state: &S) {}
    fn event(&mut self, _event: &Event, _state: &S) {}
    fn departure(&mut self, _record: &StageHitRecord) {}
    /// Number of useful packets competing at a communication epoch.
    fn useful(&mut self, _time: f64, _count: usize) {}
    fn finish(&mut self, _time: f64, _state: &S) {}
}

impl<S: ?Sized> Observer<S> for () {}

impl<S: ?Sized, O: Observer<S> + ?Sized> Observer<S> for &mut O {
    fn start(&mut self, time: f64, state: &S) {
        (**self).start(time, state)
    }
    fn interval(&mut self, from: f64, to: f64, state: &S) {
        (**self).interval(from, to, state)
    }
    fn event(&mut self, event: &Event, state: &S) {
        (**self).event(event, state)
    }
    fn departure(&mut self, record: &StageHitRecord) {
        (**self).departure(record)
    }
    fn useful(&mut self, time: f64, count: usize) {
        (**self).useful(time, count)
    }
    fn finish(&mut self, time: f64, state: &S) {
        (**self).finish(time, state)
    }
}

macro_rules! tuple_observer {
    ($($name:ident),+) => {
        impl<S: ?Sized, $($name: Observer<S>),+> Observer<S> for ($($name,)+) {
            #[allow(non_snake_case)]
            fn start(&mut self, time: f64, state: &S) {
                let ($($name,)+) = self;
                $($name.start(time, state);)+
            }
            #[allow(non_snake_case)]
            fn interval(&mut self, from: f64, to: f64, state: &S) {
                let ($($name,)+) = self;
                $($name.interval(from, to, state);)+
            }
            #[allow(non_snake_case)]
            fn event(&mut self, event: &Event, state: &S) {
                let ($($name,)+) = self;
                $($name.event(event, state);)+
            }
            #[allow(non_snake_case)]
            fn departure(&mut self, record: &StageHitRecord) {
                let ($($name,)+) = self;
                $($name.departure(record);)+
            }
            #[allow(non_snake_case)]
            fn useful(&mut self, time: f64, count: usize) {
                let ($($name,)+) = self;
                $($name.useful(time, count);)+
            }
            #[allow(non_snake_case)]
            fn finish(&mut self, time: f64, state: &S) {
                let ($($name,)+) = self;
                $($name.finish(time, state);)+
            }
        }
    };
}

tuple_observer!(A, B);
tuple_observer!(A, B, C);
tuple_observer!(A, B, C, D);

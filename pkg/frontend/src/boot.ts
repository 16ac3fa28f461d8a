import "../styles.css";
import {mount} from "./main";

const root = document.getElementById("app");
if (root) {
    mount(root);
}
